#pragma once

#include "rctsens/cluster.hpp"
#include "rctsens/csv.hpp"
#include "rctsens/dataset.hpp"
#include "rctsens/errors.hpp"
#include "rctsens/family.hpp"
#include "rctsens/glm.hpp"
#include "rctsens/inference.hpp"
#include "rctsens/mean_score.hpp"
#include "rctsens/sim/dgm.hpp"
#include "rctsens/sim/methods.hpp"
#include "rctsens/sim/study.hpp"
#include "rctsens/sweep.hpp"
#include "rctsens/two_linreg.hpp"
