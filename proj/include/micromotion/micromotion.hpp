#pragma once

#include "micromotion/adam.hpp"
#include "micromotion/bandpass.hpp"
#include "micromotion/conv_stack.hpp"
#include "micromotion/error.hpp"
#include "micromotion/eval.hpp"
#include "micromotion/fft.hpp"
#include "micromotion/matched.hpp"
#include "micromotion/model_io.hpp"
#include "micromotion/net3d.hpp"
#include "micromotion/nn1d.hpp"
#include "micromotion/parallel.hpp"
#include "micromotion/random.hpp"
#include "micromotion/report.hpp"
#include "micromotion/stats.hpp"
#include "micromotion/synthgen.hpp"
#include "micromotion/tensor_io.hpp"
#include "micromotion/types.hpp"
