#pragma once

// Everything except the command-line front end (bifscope/cli.hpp, which needs CLI11).

#include "bifscope/error.hpp"
#include "bifscope/expr.hpp"
#include "bifscope/exponents.hpp"
#include "bifscope/family.hpp"
#include "bifscope/green.hpp"
#include "bifscope/grid.hpp"
#include "bifscope/image.hpp"
#include "bifscope/jet.hpp"
#include "bifscope/measure.hpp"
#include "bifscope/parallel.hpp"
#include "bifscope/periodic.hpp"
#include "bifscope/poly.hpp"
#include "bifscope/rng.hpp"
