#pragma once

#include "mlmcopt/config.hpp"
#include "mlmcopt/core.hpp"
#include "mlmcopt/diagnostics.hpp"
#include "mlmcopt/experiments.hpp"
#include "mlmcopt/iwae.hpp"
#include "mlmcopt/kernels.hpp"
#include "mlmcopt/mlmc.hpp"
#include "mlmcopt/optim.hpp"
#include "mlmcopt/rng.hpp"
#include "mlmcopt/svg.hpp"
#include "mlmcopt/table.hpp"
