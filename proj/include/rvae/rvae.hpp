#pragma once

#include "rvae/autodiff.hpp"
#include "rvae/betaselect.hpp"
#include "rvae/checkpoint.hpp"
#include "rvae/config.hpp"
#include "rvae/data.hpp"
#include "rvae/errors.hpp"
#include "rvae/eval.hpp"
#include "rvae/losses.hpp"
#include "rvae/model.hpp"
#include "rvae/optim.hpp"
#include "rvae/robustfit.hpp"
#include "rvae/tensor.hpp"
