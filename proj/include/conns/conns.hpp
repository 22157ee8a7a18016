#pragma once

#include "conns/config.hpp"
#include "conns/dataset.hpp"
#include "conns/decomp.hpp"
#include "conns/errors.hpp"
#include "conns/evaluation.hpp"
#include "conns/integrator.hpp"
#include "conns/io.hpp"
#include "conns/linalg.hpp"
#include "conns/network.hpp"
#include "conns/ode.hpp"
#include "conns/parallel.hpp"
#include "conns/pipeline.hpp"
#include "conns/projection.hpp"
#include "conns/rng.hpp"
#include "conns/runtime.hpp"
