#pragma once

#include "cmmi/aggregate.hpp"
#include "cmmi/align.hpp"
#include "cmmi/block_model.hpp"
#include "cmmi/chain_graph.hpp"
#include "cmmi/core.hpp"
#include "cmmi/csv.hpp"
#include "cmmi/inference.hpp"
#include "cmmi/integrate.hpp"
#include "cmmi/linalg.hpp"
#include "cmmi/random.hpp"
#include "cmmi/sim_harness.hpp"
#include "cmmi/spectral_embed.hpp"
#include "cmmi/stats.hpp"
