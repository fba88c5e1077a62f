#ifndef ISSRC_ISSRC_HPP
#define ISSRC_ISSRC_HPP

#include "issrc/classification.hpp"
#include "issrc/config.hpp"
#include "issrc/core.hpp"
#include "issrc/dataset.hpp"
#include "issrc/evaluation.hpp"
#include "issrc/feature_learning.hpp"
#include "issrc/gene_selection.hpp"
#include "issrc/report.hpp"
#include "issrc/sparse_solver.hpp"

#endif  // ISSRC_ISSRC_HPP
