#pragma once

// Umbrella header.

#include "camforge/audit.hpp"
#include "camforge/cam.hpp"
#include "camforge/camf.hpp"
#include "camforge/derivcheck.hpp"
#include "camforge/error.hpp"
#include "camforge/evalharness.hpp"
#include "camforge/gradcheck.hpp"
#include "camforge/netpbm.hpp"
#include "camforge/nn.hpp"
#include "camforge/parallel.hpp"
#include "camforge/postproc.hpp"
#include "camforge/splitmix64.hpp"
#include "camforge/tensor.hpp"
