#ifndef FDEXPLAIN_FDEXPLAIN_HPP
#define FDEXPLAIN_FDEXPLAIN_HPP

#include "core.hpp"
#include "diagnosis.hpp"
#include "indexical.hpp"
#include "model_lang.hpp"
#include "propagation.hpp"

#endif // FDEXPLAIN_FDEXPLAIN_HPP
