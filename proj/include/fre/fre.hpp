#pragma once

#include "fre/baselines.hpp"
#include "fre/error.hpp"
#include "fre/evaluation.hpp"
#include "fre/feature_store.hpp"
#include "fre/kernel_subspace.hpp"
#include "fre/linear_subspace.hpp"
#include "fre/model_bank.hpp"
#include "fre/model_file.hpp"
#include "fre/random.hpp"
#include "fre/synthetic.hpp"
