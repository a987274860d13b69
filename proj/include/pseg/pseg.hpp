#ifndef PSEG_PSEG_HPP
#define PSEG_PSEG_HPP

#include "pseg/error.hpp"
#include "pseg/matrix.hpp"
#include "pseg/types.hpp"
#include "pseg/csv.hpp"
#include "pseg/image.hpp"
#include "pseg/normalize.hpp"
#include "pseg/features.hpp"
#include "pseg/superpixels.hpp"
#include "pseg/pflicm.hpp"
#include "pseg/kdtree.hpp"
#include "pseg/pknn.hpp"
#include "pseg/model_io.hpp"
#include "pseg/eval.hpp"
#include "pseg/synth.hpp"
#include "pseg/pipeline.hpp"

#endif  // PSEG_PSEG_HPP
