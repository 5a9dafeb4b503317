#pragma once

#include "carrm/cv.hpp"
#include "carrm/dataset.hpp"
#include "carrm/diagnostics.hpp"
#include "carrm/error.hpp"
#include "carrm/features.hpp"
#include "carrm/gate.hpp"
#include "carrm/identification.hpp"
#include "carrm/io.hpp"
#include "carrm/linalg.hpp"
#include "carrm/lottery.hpp"
#include "carrm/rules.hpp"
#include "carrm/synth.hpp"
#include "carrm/two_step.hpp"
