#pragma once

#include "config.hpp"
#include "config_json.hpp"
#include "error.hpp"
#include "hierarchy.hpp"
#include "metrics.hpp"
#include "network.hpp"
#include "observables.hpp"
#include "operator.hpp"
#include "output.hpp"
#include "reference.hpp"
#include "sweep.hpp"
