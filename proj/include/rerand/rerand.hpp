#ifndef RERAND_RERAND_HPP
#define RERAND_RERAND_HPP

#include "rerand/balance.hpp"
#include "rerand/chi_squared.hpp"
#include "rerand/errors.hpp"
#include "rerand/inference.hpp"
#include "rerand/io.hpp"
#include "rerand/rng.hpp"
#include "rerand/samplers.hpp"
#include "rerand/simlab.hpp"
#include "rerand/version.hpp"

#endif  // RERAND_RERAND_HPP
