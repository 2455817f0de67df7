#pragma once

#include "curvclust/autodiff.hpp"
#include "curvclust/config.hpp"
#include "curvclust/encoder.hpp"
#include "curvclust/errors.hpp"
#include "curvclust/frgcn.hpp"
#include "curvclust/geometry_ad.hpp"
#include "curvclust/graph.hpp"
#include "curvclust/losses.hpp"
#include "curvclust/manifold.hpp"
#include "curvclust/metrics.hpp"
#include "curvclust/params.hpp"
#include "curvclust/ricci.hpp"
#include "curvclust/synthetic.hpp"
#include "curvclust/trainer.hpp"
#include "curvclust/transport.hpp"
