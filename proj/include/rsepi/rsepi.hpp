#pragma once

#include "rsepi/types.hpp"
#include "rsepi/geometry.hpp"
#include "rsepi/essential.hpp"
#include "rsepi/linear.hpp"
#include "rsepi/nonlinear.hpp"
#include "rsepi/robust.hpp"
#include "rsepi/synth.hpp"
#include "rsepi/sweep.hpp"
#include "rsepi/io.hpp"
