#pragma once

#include "series.hpp"
#include "linalg.hpp"
#include "fischer.hpp"
#include "models.hpp"
#include "maps.hpp"
#include "cr_tensors.hpp"
#include "partial_nf.hpp"
#include "full_nf.hpp"
#include "equivalence.hpp"
#include "io.hpp"
#include "cli.hpp"
