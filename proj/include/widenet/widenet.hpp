#pragma once

#include "widenet/errors.hpp"
#include "widenet/numkernel.hpp"
#include "widenet/activation.hpp"
#include "widenet/embedding.hpp"
#include "widenet/model.hpp"
#include "widenet/model_io.hpp"
#include "widenet/active_fraction.hpp"
#include "widenet/train.hpp"
#include "widenet/datasets.hpp"
#include "widenet/diagnostics.hpp"
#include "widenet/report.hpp"
#include "widenet/harness.hpp"
