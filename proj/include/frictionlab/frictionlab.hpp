#pragma once

#include "frictionlab/error.hpp"
#include "frictionlab/extended_real.hpp"
#include "frictionlab/market_tree.hpp"
#include "frictionlab/friction.hpp"
#include "frictionlab/payoffs.hpp"
#include "frictionlab/primal.hpp"
#include "frictionlab/dual.hpp"
#include "frictionlab/kusuoka.hpp"
#include "frictionlab/limit_pde.hpp"
#include "frictionlab/text_io.hpp"
