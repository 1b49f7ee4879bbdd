#pragma once

#include <failstack/cart.hpp>
#include <failstack/classifier.hpp>
#include <failstack/common.hpp>
#include <failstack/csv.hpp>
#include <failstack/extra_trees.hpp>
#include <failstack/gbt.hpp>
#include <failstack/imputation.hpp>
#include <failstack/linear.hpp>
#include <failstack/metrics.hpp>
#include <failstack/pipeline.hpp>
#include <failstack/profile.hpp>
#include <failstack/selection.hpp>
#include <failstack/stacking.hpp>
#include <failstack/synthetic.hpp>
#include <failstack/table.hpp>
#include <failstack/transforms.hpp>
#include <failstack/tree.hpp>
