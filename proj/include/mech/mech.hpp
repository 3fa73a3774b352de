#pragma once

// Umbrella header.
#include "mech/allocation.hpp"
#include "mech/centralized.hpp"
#include "mech/equality_rows.hpp"
#include "mech/error.hpp"
#include "mech/experiment.hpp"
#include "mech/game.hpp"
#include "mech/instance.hpp"
#include "mech/io.hpp"
#include "mech/mechanism.hpp"
#include "mech/properties.hpp"
#include "mech/random.hpp"
#include "mech/scenario.hpp"
#include "mech/summation.hpp"
#include "mech/taxation.hpp"
#include "mech/validate.hpp"
#include "mech/valuation.hpp"
