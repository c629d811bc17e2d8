#pragma once

#include "blindsgp/blind.hpp"
#include "blindsgp/error.hpp"
#include "blindsgp/fourier.hpp"
#include "blindsgp/grid.hpp"
#include "blindsgp/metrics.hpp"
#include "blindsgp/objective.hpp"
#include "blindsgp/projection.hpp"
#include "blindsgp/rng.hpp"
#include "blindsgp/sgp.hpp"
#include "blindsgp/skysim.hpp"
