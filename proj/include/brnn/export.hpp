#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "brnn/forest.hpp"
#include "brnn/sweep.hpp"

namespace brnn {

enum class ExportKind { curves, scatter, bins, pred, runs };

ExportKind parse_export_kind(std::string_view name);
std::string_view export_kind_name(ExportKind k) noexcept;

// curves: run_id,epoch,val_loss,val_acc,hp_band (val_acc blank when the task has no accuracy)
std::string curves_csv(const std::vector<RunRecord>& records);
// scatter: run_id,block_id,block_sparsity,min_val_loss, six rows per run
std::string scatter_csv(const std::vector<RunRecord>& records);
// bins: metric,bin_lo,bin_hi,mean_min_loss,n,n_unstable,uc for both metrics
std::string bins_csv(const std::vector<RunRecord>& records);
// pred: run_id,actual_min_loss,predicted_min_loss; actual is the forest target (unstable runs capped)
std::string pred_csv(const std::vector<RunRecord>& records, const Forest& forest);
// runs: run_id, the 20 features, then hidden_dim,total_params,model_sparsity,stable,min_val_loss,loss_1..loss_E
std::string runs_csv(const std::vector<RunRecord>& records);

}  // namespace brnn
