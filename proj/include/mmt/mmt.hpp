#pragma once

#include "mmt/corpus.hpp"
#include "mmt/decoder.hpp"
#include "mmt/encoders.hpp"
#include "mmt/evaluation.hpp"
#include "mmt/experiment.hpp"
#include "mmt/filters.hpp"
#include "mmt/model.hpp"
#include "mmt/querygen.hpp"
#include "mmt/retrieval.hpp"
#include "mmt/trainer.hpp"
#include "mmt/training.hpp"
