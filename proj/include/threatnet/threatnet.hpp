#pragma once

#include "threatnet/error.hpp"
#include "threatnet/types.hpp"
#include "threatnet/state_filter.hpp"
#include "threatnet/edge_inference.hpp"
#include "threatnet/population_graph.hpp"
#include "threatnet/indicators.hpp"
#include "threatnet/orchestrator.hpp"
#include "threatnet/stream.hpp"
#include "threatnet/random.hpp"
#include "threatnet/scenario_sim.hpp"
#include "threatnet/io/json.hpp"
#include "threatnet/io/files.hpp"
#include "threatnet/service.hpp"
