#pragma once

#include "criterion.hpp"
#include "errors.hpp"
#include "estimator.hpp"
#include "inference.hpp"
#include "montecarlo.hpp"
#include "panel_model.hpp"
#include "random.hpp"
#include "sampling_grid.hpp"
#include "spectrum.hpp"
