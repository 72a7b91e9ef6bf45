#pragma once

// CMI-guided NEAT for profiled side-channel analysis: matrix-based Renyi
// entropy estimation, neuroevolution with information-theoretic selection and
// stopping, one-vs-all stacking, and key-rank evaluation.

#include "infoneat/config.hpp"
#include "infoneat/criteria.hpp"
#include "infoneat/data.hpp"
#include "infoneat/ensemble.hpp"
#include "infoneat/entropy.hpp"
#include "infoneat/errors.hpp"
#include "infoneat/evaluation.hpp"
#include "infoneat/evolution.hpp"
#include "infoneat/genome.hpp"
#include "infoneat/pipeline.hpp"
#include "infoneat/report.hpp"
#include "infoneat/rng.hpp"
#include "infoneat/sbox.hpp"
