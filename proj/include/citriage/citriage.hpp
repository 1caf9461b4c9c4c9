#pragma once

#include "citriage/corpus_gen.hpp"
#include "citriage/dataset.hpp"
#include "citriage/encoder.hpp"
#include "citriage/errors.hpp"
#include "citriage/evaluation.hpp"
#include "citriage/head.hpp"
#include "citriage/log_preprocess.hpp"
#include "citriage/logsift.hpp"
#include "citriage/metrics.hpp"
#include "citriage/pipeline.hpp"
#include "citriage/random.hpp"
#include "citriage/reports.hpp"
