#pragma once

#include "dsparse/config.hpp"
#include "dsparse/dihat.hpp"
#include "dsparse/experiment.hpp"
#include "dsparse/greedi.hpp"
#include "dsparse/linalg.hpp"
#include "dsparse/network.hpp"
#include "dsparse/rng.hpp"
#include "dsparse/scenario.hpp"
#include "dsparse/theory.hpp"
#include "dsparse/trace.hpp"
