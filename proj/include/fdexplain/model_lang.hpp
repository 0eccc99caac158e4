#ifndef FDEXPLAIN_MODEL_LANG_HPP
#define FDEXPLAIN_MODEL_LANG_HPP

// Text formats: models (.fd), expected environments (.expect) and
// explanation documents (.expl, JSON).
//
// Model grammar, one statement per line or separated by ';', '#' comments:
//
//   var X in 1..4;            var X in {1, 3, 5};
//   X > Y;   X < Y;   X >= Y;   X <= Y;   X != Y;   X = Y;
//   X != Y + 2;   X = Y - 1;  (any binary relation takes an offset)
//   X != 4;
//   table (X, Y) { (1,2), (2,3) };

#include "core.hpp"
#include "diagnosis.hpp"
#include "indexical.hpp"
#include "propagation.hpp"

#include <nlohmann/json.hpp>

#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace fdx {

using Json = nlohmann::ordered_json;

class ParseError : public Error {
public:
    ParseError(std::size_t line, std::size_t column, const std::string& what)
        : Error(std::to_string(line) + ":" + std::to_string(column) + ": " + what), line_(line), column_(column) {}
    std::size_t line() const { return line_; }
    std::size_t column() const { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

namespace detail {

struct Token {
    enum Kind { Ident, Int, Sym, Newline, End } kind = End;
    std::string text;
    long long number = 0;
    std::size_t line = 1;
    std::size_t column = 1;
};

inline std::vector<Token> tokenize(std::string_view src) {
    std::vector<Token> out;
    std::size_t line = 1, col = 1, i = 0;
    auto bump = [&](std::size_t n) {
        i += n;
        col += n;
    };
    while (i < src.size()) {
        char c = src[i];
        if (c == '#') {
            while (i < src.size() && src[i] != '\n') ++i;
            continue;
        }
        if (c == '\n') {
            out.push_back({Token::Newline, "\\n", 0, line, col});
            ++i;
            ++line;
            col = 1;
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            bump(1);
            continue;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
            out.push_back({Token::Ident, std::string(src.substr(i, j - i)), 0, line, col});
            bump(j - i);
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            std::size_t j = i;
            while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
            Token t{Token::Int, std::string(src.substr(i, j - i)), 0, line, col};
            auto [p, ec] = std::from_chars(src.data() + i, src.data() + j, t.number);
            if (ec != std::errc{} || t.number > INT32_MAX) throw ParseError(line, col, "integer out of range");
            out.push_back(t);
            bump(j - i);
            continue;
        }
        static constexpr std::string_view two[] = {"..", ">=", "<=", "!="};
        bool matched = false;
        for (auto s : two) {
            if (src.substr(i, 2) == s) {
                out.push_back({Token::Sym, std::string(s), 0, line, col});
                bump(2);
                matched = true;
                break;
            }
        }
        if (matched) continue;
        if (std::string_view("><=;,(){}+-:").find(c) != std::string_view::npos) {
            out.push_back({Token::Sym, std::string(1, c), 0, line, col});
            bump(1);
            continue;
        }
        throw ParseError(line, col, std::string("unexpected character '") + c + "'");
    }
    out.push_back({Token::End, "end of input", 0, line, col});
    return out;
}

class ModelParser {
public:
    ModelParser(std::string_view src, ValueRange range) : toks_(tokenize(src)), range_(range) {}

    Csp parse() {
        while (true) {
            skip_separators();
            if (peek().kind == Token::End) return std::move(csp_);
            statement();
            const auto& t = peek();
            if (t.kind == Token::End || t.kind == Token::Newline || is(t, ";")) continue;
            fail(t, "expected ';' or end of line after statement");
        }
    }

private:
    static bool is(const Token& t, std::string_view sym) { return t.kind == Token::Sym && t.text == sym; }
    const Token& peek() const { return toks_[pos_]; }
    const Token& next() { return toks_[pos_++]; }
    [[noreturn]] static void fail(const Token& t, const std::string& what) {
        throw ParseError(t.line, t.column, what + " (found '" + t.text + "')");
    }
    void expect(std::string_view sym) {
        if (!is(peek(), sym)) fail(peek(), "expected '" + std::string(sym) + "'");
        ++pos_;
    }
    void skip_separators() {
        while (peek().kind == Token::Newline || is(peek(), ";")) ++pos_;
    }
    void skip_newlines() {
        while (peek().kind == Token::Newline) ++pos_;
    }
    const Token& ident() {
        if (peek().kind != Token::Ident) fail(peek(), "expected a name");
        return next();
    }
    int integer() {
        bool neg = false;
        if (is(peek(), "-")) {
            neg = true;
            ++pos_;
        } else if (is(peek(), "+")) {
            ++pos_;
        }
        if (peek().kind != Token::Int) fail(peek(), "expected an integer");
        auto v = next().number;
        return static_cast<int>(neg ? -v : v);
    }
    VarId variable(const Token& t) {
        auto v = csp_.domains().find(t.text);
        if (!v) throw ParseError(t.line, t.column, "undeclared variable '" + t.text + "'");
        return *v;
    }

    void statement() {
        const auto& first = peek();
        if (first.kind == Token::Ident && first.text == "var") {
            ++pos_;
            declaration();
        } else if (first.kind == Token::Ident && first.text == "table") {
            ++pos_;
            table(first);
        } else if (first.kind == Token::Ident) {
            relation();
        } else {
            fail(first, "expected a statement");
        }
    }

    void declaration() {
        const auto& name = ident();
        if (peek().kind != Token::Ident || peek().text != "in") fail(peek(), "expected 'in'");
        ++pos_;
        std::vector<int> values;
        const auto& at = peek();
        if (is(at, "{")) {
            ++pos_;
            skip_newlines();
            if (!is(peek(), "}")) {
                values.push_back(integer());
                skip_newlines();
                while (is(peek(), ",")) {
                    ++pos_;
                    skip_newlines();
                    values.push_back(integer());
                    skip_newlines();
                }
            }
            expect("}");
        } else {
            int lo = integer();
            expect("..");
            int hi = integer();
            if (lo <= hi && (lo < range_.lo || hi > range_.hi))
                throw ParseError(at.line, at.column,
                                 "domain of '" + name.text + "' leaves the value range " + std::to_string(range_.lo) +
                                     ".." + std::to_string(range_.hi));
            for (long long v = lo; v <= hi; ++v) values.push_back(static_cast<int>(v));
        }
        if (values.empty()) throw ParseError(at.line, at.column, "empty domain for variable '" + name.text + "'");
        try {
            csp_.add_variable(name.text, std::move(values), range_);
        } catch (const ParseError&) {
            throw;
        } catch (const Error& e) {
            throw ParseError(name.line, name.column, e.what());
        }
    }

    void table(const Token& kw) {
        expect("(");
        std::vector<VarId> scope{variable(ident())};
        while (is(peek(), ",")) {
            ++pos_;
            scope.push_back(variable(ident()));
        }
        expect(")");
        expect("{");
        std::vector<std::vector<int>> tuples;
        skip_newlines();
        while (is(peek(), "(")) {
            const auto& open = next();
            std::vector<int> t{integer()};
            while (is(peek(), ",")) {
                ++pos_;
                t.push_back(integer());
            }
            expect(")");
            if (t.size() != scope.size())
                throw ParseError(open.line, open.column, "tuple arity does not match the table scope");
            tuples.push_back(std::move(t));
            skip_newlines();
            if (!is(peek(), ",")) break;
            ++pos_;
            skip_newlines();
        }
        expect("}");
        add(kw, {"", std::move(scope), Relation::Table, 0, std::move(tuples)});
    }

    void relation() {
        const auto& lhs = next();
        auto x = variable(lhs);
        const auto& op = next();
        Relation rel;
        if (is(op, ">")) rel = Relation::Gt;
        else if (is(op, "<")) rel = Relation::Lt;
        else if (is(op, ">=")) rel = Relation::Ge;
        else if (is(op, "<=")) rel = Relation::Le;
        else if (is(op, "=")) rel = Relation::Eq;
        else if (is(op, "!=")) rel = Relation::Neq;
        else fail(op, "expected a relation (>, <, >=, <=, =, !=)");

        if (peek().kind != Token::Ident) {
            const auto& at = peek();
            int k = integer();
            if (rel != Relation::Neq) throw ParseError(at.line, at.column, "only '!=' accepts a constant right-hand side");
            add(lhs, {"", {x}, Relation::NeqConst, k, {}});
            return;
        }
        auto y = variable(next());
        int offset = 0;
        if (is(peek(), "+") || is(peek(), "-")) {
            bool neg = next().text == "-";
            if (peek().kind != Token::Int) fail(peek(), "expected an integer offset");
            auto v = next().number;
            offset = static_cast<int>(neg ? -v : v);
        }
        add(lhs, {"", {x, y}, rel, offset, {}});
    }

    void add(const Token& at, Constraint c) {
        try {
            csp_.add_constraint(std::move(c));
        } catch (const Error& e) {
            throw ParseError(at.line, at.column, e.what());
        }
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
    ValueRange range_;
    Csp csp_;
};

} // namespace detail

inline Csp parse_model(std::string_view text, ValueRange range = {}) {
    return detail::ModelParser(text, range).parse();
}

inline std::string print_constraint(const Domains& dom, const Constraint& c) {
    std::ostringstream os;
    if (c.relation == Relation::Table) {
        os << "table (";
        for (std::size_t i = 0; i < c.scope.size(); ++i) os << (i ? ", " : "") << dom.name(c.scope[i]);
        os << ") {";
        for (std::size_t t = 0; t < c.tuples.size(); ++t) {
            os << (t ? ", (" : " (");
            for (std::size_t i = 0; i < c.tuples[t].size(); ++i) os << (i ? "," : "") << c.tuples[t][i];
            os << ")";
        }
        os << " };";
        return os.str();
    }
    os << dom.name(c.scope[0]) << " " << relation_symbol(c.relation) << " ";
    if (c.relation == Relation::NeqConst) {
        os << c.offset << ";";
        return os.str();
    }
    os << dom.name(c.scope[1]);
    if (c.offset > 0) os << " + " << c.offset;
    if (c.offset < 0) os << " - " << -static_cast<long long>(c.offset);
    os << ";";
    return os.str();
}

inline std::string print_model(const Csp& csp) {
    const auto& dom = csp.domains();
    std::ostringstream os;
    for (std::uint32_t x = 0; x < dom.var_count(); ++x) {
        auto vals = dom.values(VarId{x});
        os << "var " << dom.name(VarId{x}) << " in ";
        bool contiguous = vals.back() - vals.front() + 1 == static_cast<long long>(vals.size());
        if (contiguous) {
            os << vals.front() << ".." << vals.back();
        } else {
            os << "{";
            for (std::size_t i = 0; i < vals.size(); ++i) os << (i ? ", " : "") << vals[i];
            os << "}";
        }
        os << ";\n";
    }
    for (const auto& c : csp.constraints()) os << print_constraint(dom, c) << "\n";
    return os.str();
}

/// Lines `X: 1 2`; variables without a line keep their whole initial domain.
inline Environment parse_expected(std::string_view text, const DomainsPtr& domains) {
    const auto& dom = *domains;
    auto d = Environment::full(domains);
    std::vector<char> seen(dom.var_count(), 0);
    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        auto colon = line.find(':');
        std::istringstream head(line.substr(0, colon));
        std::string name, extra;
        if (!(head >> name)) {
            if (colon == std::string::npos) continue;
            throw ParseError(line_no, 1, "missing variable name");
        }
        if (colon == std::string::npos) throw ParseError(line_no, 1, "expected 'NAME: values'");
        if (head >> extra) throw ParseError(line_no, 1, "unexpected text before ':'");
        auto v = dom.find(name);
        if (!v) throw ParseError(line_no, 1, "unknown variable '" + name + "'");
        if (!seen[v->index]) {
            d.of(*v) = ValueSet(dom.size(*v));
            seen[v->index] = 1;
        }
        std::istringstream rest(line.substr(colon + 1));
        for (std::string tok; rest >> tok;) {
            int value = 0;
            auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
            if (ec != std::errc{} || p != tok.data() + tok.size())
                throw ParseError(line_no, colon + 2, "'" + tok + "' is not an integer");
            if (!dom.position(*v, value))
                throw ParseError(line_no, colon + 2,
                                 "value " + tok + " is outside the initial domain of '" + name + "'");
            d.insert({*v, value});
        }
    }
    return d;
}

inline std::string render_environment(const Environment& d) {
    const auto& dom = d.domains();
    std::string out;
    for (std::uint32_t x = 0; x < dom.var_count(); ++x) {
        out += dom.name(VarId{x}) + ":";
        for (int v : d.values(VarId{x})) out += " " + std::to_string(v);
        out += "\n";
    }
    return out;
}

/// One line per variable listing the kept values in ascending order.
inline std::string render_closure(const Environment& d) { return render_environment(d); }

inline Json environment_to_json(const Environment& d) {
    Json j = Json::object();
    const auto& dom = d.domains();
    for (std::uint32_t x = 0; x < dom.var_count(); ++x) j[dom.name(VarId{x})] = d.values(VarId{x});
    return j;
}

inline std::string model_hash(const Csp& csp) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : print_model(csp)) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline Json pair_to_json(const Domains& dom, ValuePair p) {
    return Json{{"var", dom.name(p.var)}, {"value", p.value}};
}

inline ValuePair pair_from_json(const Domains& dom, const Json& j) {
    if (!j.is_object() || !j.contains("var") || !j.contains("value") || !j["var"].is_string() ||
        !j["value"].is_number_integer())
        throw Error("expected an object {\"var\": name, \"value\": integer}");
    ValuePair p{dom.at(j["var"].get<std::string>()), j["value"].get<int>()};
    if (!dom.contains(p)) throw Error("pair " + dom.format(p) + " is outside the initial domains");
    return p;
}

/// Parses `VAR=value`.
inline ValuePair parse_pair(std::string_view text, const Domains& dom) {
    auto eq = text.find('=');
    if (eq == std::string_view::npos) throw Error("expected VAR=value, got '" + std::string(text) + "'");
    std::string name(text.substr(0, eq));
    auto num = text.substr(eq + 1);
    int value = 0;
    auto [p, ec] = std::from_chars(num.data(), num.data() + num.size(), value);
    if (ec != std::errc{} || p != num.data() + num.size() || num.empty())
        throw Error("'" + std::string(num) + "' is not an integer");
    ValuePair vp{dom.at(name), value};
    if (!dom.contains(vp)) throw Error("value " + std::to_string(value) + " is outside the domain of '" + name + "'");
    return vp;
}

struct DocumentMetadata {
    std::string model_hash;
    std::optional<std::uint64_t> schedule_seed;
};

/// Flattens `tree` into node records in preorder; the root has id 0.
inline Json export_explanation(const ExplanationTree& tree, const Domains& dom, const DocumentMetadata& meta = {},
                               const Program* prog = nullptr) {
    Json nodes = Json::array();
    bool truncated = false;
    auto emit = [&](auto& self, const ExplanationTree& t) -> std::size_t {
        auto id = nodes.size();
        nodes.push_back(Json::object());
        Json children = Json::array();
        for (const auto& c : t.children) children.push_back(self(self, c));
        Json rec{{"id", id}, {"var", dom.name(t.root.var)}, {"value", t.root.value}};
        rec["operator_id"] = t.rule ? Json(t.rule->operator_id) : Json(nullptr);
        if (prog && t.rule) rec["operator"] = describe(prog->op(t.rule->operator_id), dom);
        rec["constraint"] = t.rule ? Json(t.rule->constraint_label) : Json(nullptr);
        rec["seq"] = t.seq;
        rec["children"] = std::move(children);
        if (t.truncated) {
            rec["truncated"] = true;
            truncated = true;
        }
        nodes[id] = std::move(rec);
        return id;
    };
    emit(emit, tree);
    Json doc;
    doc["root_id"] = 0;
    doc["truncated"] = truncated;
    doc["nodes"] = std::move(nodes);
    doc["metadata"] = {{"model_hash", meta.model_hash},
                       {"schedule_seed", meta.schedule_seed ? Json(*meta.schedule_seed) : Json(nullptr)}};
    return doc;
}

/// Rebuilds a tree from a document. Rules are reconstructed from the node
/// labels: head = node pair, body = children's pairs.
inline ExplanationTree import_explanation(const Json& doc, const Domains& dom) {
    if (!doc.is_object() || !doc.contains("nodes") || !doc["nodes"].is_array())
        throw Error("explanation document needs a 'nodes' array");
    const auto& nodes = doc["nodes"];
    std::map<std::uint64_t, const Json*> by_id;
    for (const auto& n : nodes) {
        if (!n.is_object() || !n.contains("id") || !n["id"].is_number_unsigned())
            throw Error("explanation node without a valid id");
        if (!by_id.emplace(n["id"].get<std::uint64_t>(), &n).second) throw Error("duplicate explanation node id");
    }
    auto root_id = doc.value("root_id", std::uint64_t{0});
    std::set<std::uint64_t> used;
    auto build = [&](auto& self, std::uint64_t id) -> ExplanationTree {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw Error("explanation node " + std::to_string(id) + " does not exist");
        if (!used.insert(id).second) throw Error("explanation node " + std::to_string(id) + " is reachable twice");
        const auto& n = *it->second;
        ExplanationTree t{pair_from_json(dom, n), nullptr, n.value("seq", std::uint64_t{0}), n.value("truncated", false), {}};
        if (n.contains("children")) {
            if (!n["children"].is_array()) throw Error("explanation node children must be an array");
            for (const auto& c : n["children"]) {
                if (!c.is_number_unsigned()) throw Error("explanation child ids must be unsigned integers");
                t.children.push_back(self(self, c.get<std::uint64_t>()));
            }
        }
        if (n.contains("operator_id") && n["operator_id"].is_number_unsigned()) {
            DeductionRule r{t.root, {}, n["operator_id"].get<std::uint32_t>(), n.value("constraint", std::string{})};
            for (const auto& c : t.children) r.body.push_back(c.root);
            t.rule = std::make_shared<const DeductionRule>(std::move(r));
        }
        return t;
    };
    return build(build, root_id);
}

inline std::string format_rule(const DeductionRule& r, const Domains& dom) {
    std::string s = dom.format(r.head) + " <-";
    if (r.body.empty()) return s + " {}";
    for (std::size_t i = 0; i < r.body.size(); ++i) s += (i ? ", " : " ") + dom.format(r.body[i]);
    return s;
}

inline std::string question_text(const Domains& dom, ValuePair p) {
    return "Is " + dom.format(p) + " expected to be kept?";
}

inline Json question_to_json(const Domains& dom, ValuePair p) {
    auto j = pair_to_json(dom, p);
    j["text"] = question_text(dom, p);
    return j;
}

inline Json rule_to_json(const DeductionRule& r, const Domains& dom, const Program* prog = nullptr) {
    Json body = Json::array();
    for (auto b : r.body) body.push_back(pair_to_json(dom, b));
    Json j{{"head", pair_to_json(dom, r.head)}, {"body", std::move(body)}, {"operator_id", r.operator_id}};
    if (prog) j["operator"] = describe(prog->op(r.operator_id), dom);
    j["constraint"] = r.constraint_label;
    j["text"] = format_rule(r, dom);
    return j;
}

/// The payload shared by the CLI and the HTTP service.
inline Json diagnosis_to_json(const Diagnosis& d, const Domains& dom, const Program* prog = nullptr) {
    Json culprits = Json::array();
    for (const auto& c : d.culprits) {
        Json cj{{"symptom", pair_to_json(dom, c.symptom)}};
        cj["rule"] = c.rule ? rule_to_json(*c.rule, dom, prog) : Json(nullptr);
        culprits.push_back(std::move(cj));
    }
    Json j{{"definite", d.definite}, {"questions", d.questions}};
    j["minimal_symptom"] = d.definite ? pair_to_json(dom, d.primary().symptom) : Json(nullptr);
    j["rule"] = d.definite && d.primary().rule ? rule_to_json(*d.primary().rule, dom, prog) : Json(nullptr);
    j["constraint"] = d.definite ? Json(d.primary().constraint_label()) : Json(nullptr);
    j["candidates"] = std::move(culprits);
    return j;
}

} // namespace fdx

#endif // FDEXPLAIN_MODEL_LANG_HPP
