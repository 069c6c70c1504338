#pragma once

// Convenience include for the whole library.

#include "roundrank/analysis.hpp"
#include "roundrank/datasets.hpp"
#include "roundrank/experiment.hpp"
#include "roundrank/generators.hpp"
#include "roundrank/io.hpp"
#include "roundrank/link.hpp"
#include "roundrank/matrix.hpp"
#include "roundrank/optim.hpp"
#include "roundrank/svd.hpp"
