#pragma once

#include "exset/errors.hpp"
#include "exset/log.hpp"
#include "exset/seeds.hpp"
#include "exset/field.hpp"
#include "exset/probinput.hpp"
#include "exset/pca.hpp"
#include "exset/kernel.hpp"
#include "exset/optimize.hpp"
#include "exset/gp.hpp"
#include "exset/path_sampler.hpp"
#include "exset/surrogate.hpp"
#include "exset/excursion.hpp"
#include "exset/realizations.hpp"
#include "exset/testbeds.hpp"
#include "exset/metrics.hpp"
#include "exset/active_learning.hpp"
#include "exset/kde_pce.hpp"
#include "exset/config.hpp"
#include "exset/report.hpp"
#include "exset/commands.hpp"
