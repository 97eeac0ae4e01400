#pragma once

// Umbrella header for the library (the CLI layer lives in uavwm/cli.hpp).

#include "uavwm/geometry.hpp"
#include "uavwm/scenario.hpp"
#include "uavwm/potential_field.hpp"
#include "uavwm/expert_ga.hpp"
#include "uavwm/symbolic.hpp"
#include "uavwm/world_model.hpp"
#include "uavwm/filters.hpp"
#include "uavwm/inference.hpp"
#include "uavwm/ingest.hpp"
#include "uavwm/runtime.hpp"
