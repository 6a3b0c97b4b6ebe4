#pragma once

#include "prefkit/errors.hpp"
#include "prefkit/graph.hpp"
#include "prefkit/jsonl.hpp"
#include "prefkit/metrics.hpp"
#include "prefkit/pipeline.hpp"
#include "prefkit/rng.hpp"
#include "prefkit/supervision.hpp"
#include "prefkit/text.hpp"
#include "prefkit/trainer.hpp"
#include "prefkit/types.hpp"
