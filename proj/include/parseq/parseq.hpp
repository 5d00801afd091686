#ifndef PARSEQ_PARSEQ_HPP_
#define PARSEQ_PARSEQ_HPP_

#include "parseq/analysis.hpp"
#include "parseq/core.hpp"
#include "parseq/linalg.hpp"
#include "parseq/parallel.hpp"
#include "parseq/random.hpp"
#include "parseq/scan.hpp"
#include "parseq/solvers.hpp"
#include "parseq/systems.hpp"

#endif  // PARSEQ_PARSEQ_HPP_
