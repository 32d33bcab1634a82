#pragma once

#include "nnrepair/error.hpp"
#include "nnrepair/model.hpp"
#include "nnrepair/nnet.hpp"
#include "nnrepair/property.hpp"
#include "nnrepair/fvim.hpp"
#include "nnrepair/geometry.hpp"
#include "nnrepair/vzono.hpp"
#include "nnrepair/reach.hpp"
#include "nnrepair/repair.hpp"
#include "nnrepair/io.hpp"
#include "nnrepair/fixtures.hpp"
