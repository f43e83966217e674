#pragma once

#include "smloc/alpha_interval.hpp"
#include "smloc/baseline.hpp"
#include "smloc/conic.hpp"
#include "smloc/geometry.hpp"
#include "smloc/model.hpp"
#include "smloc/remainder.hpp"
#include "smloc/solver.hpp"
#include "smloc/update.hpp"
