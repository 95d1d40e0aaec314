#pragma once

#include "qpl/errors.hpp"
#include "qpl/random.hpp"
#include "qpl/jet.hpp"
#include "qpl/expression.hpp"
#include "qpl/torus.hpp"
#include "qpl/ode.hpp"
#include "qpl/geometry.hpp"
#include "qpl/problem.hpp"
#include "qpl/conditions.hpp"
#include "qpl/connect.hpp"
#include "qpl/solver.hpp"
#include "qpl/verify.hpp"
#include "qpl/dichotomy.hpp"
#include "qpl/io.hpp"
#include "qpl/app.hpp"
