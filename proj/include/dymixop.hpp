#pragma once

#include "dymixop/autodiff.hpp"
#include "dymixop/commands.hpp"
#include "dymixop/config.hpp"
#include "dymixop/dataset.hpp"
#include "dymixop/error.hpp"
#include "dymixop/fft.hpp"
#include "dymixop/gradcheck.hpp"
#include "dymixop/io.hpp"
#include "dymixop/model.hpp"
#include "dymixop/parallel.hpp"
#include "dymixop/solvers.hpp"
#include "dymixop/spectral.hpp"
#include "dymixop/tensor.hpp"
#include "dymixop/training.hpp"
