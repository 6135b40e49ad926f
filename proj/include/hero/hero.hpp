#pragma once

// Umbrella header.

#include "hero/analysis.hpp"
#include "hero/budgeting.hpp"
#include "hero/efficiency.hpp"
#include "hero/error.hpp"
#include "hero/pipeline.hpp"
#include "hero/scoring.hpp"
#include "hero/selection.hpp"
#include "hero/synth.hpp"
#include "hero/tensor.hpp"
#include "hero/tiling.hpp"
#include "hero/trace.hpp"
#include "hero/trace_io.hpp"
