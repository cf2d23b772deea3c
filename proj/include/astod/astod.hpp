#pragma once

#include "astod/commands.hpp"
#include "astod/config.hpp"
#include "astod/dataset.hpp"
#include "astod/error.hpp"
#include "astod/eval.hpp"
#include "astod/geometry.hpp"
#include "astod/io.hpp"
#include "astod/nms.hpp"
#include "astod/pseudolabel.hpp"
#include "astod/reports.hpp"
#include "astod/simulator.hpp"
#include "astod/stages.hpp"
#include "astod/thresholding.hpp"
