#pragma once

#include "nsbo/acquisition.hpp"
#include "nsbo/common.hpp"
#include "nsbo/cylindrical.hpp"
#include "nsbo/evidence.hpp"
#include "nsbo/fit.hpp"
#include "nsbo/gp.hpp"
#include "nsbo/harness.hpp"
#include "nsbo/hyperprior.hpp"
#include "nsbo/informative.hpp"
#include "nsbo/kernel.hpp"
#include "nsbo/lbfgsb.hpp"
#include "nsbo/mean.hpp"
#include "nsbo/objectives.hpp"
#include "nsbo/sobol.hpp"
