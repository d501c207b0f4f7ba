#pragma once

#include "stopgame/errors.hpp"
#include "stopgame/numerics.hpp"
#include "stopgame/discounting.hpp"
#include "stopgame/rng.hpp"
#include "stopgame/regions.hpp"
#include "stopgame/dynamics.hpp"
#include "stopgame/hitting.hpp"
#include "stopgame/parallel.hpp"
#include "stopgame/payoff.hpp"
#include "stopgame/valuation.hpp"
#include "stopgame/equilibrium.hpp"
#include "stopgame/discrete_oracle.hpp"
#include "stopgame/scenarios.hpp"
#include "stopgame/io.hpp"
#include "stopgame/config.hpp"
