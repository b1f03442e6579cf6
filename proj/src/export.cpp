#include "brnn/export.hpp"

#include <sstream>

#include "brnn/error.hpp"
#include "brnn/io.hpp"

namespace brnn {

ExportKind parse_export_kind(std::string_view name) {
  if (name == "curves") return ExportKind::curves;
  if (name == "scatter") return ExportKind::scatter;
  if (name == "bins") return ExportKind::bins;
  if (name == "pred" || name == "predicted-vs-actual") return ExportKind::pred;
  if (name == "runs") return ExportKind::runs;
  throw ConfigError("unknown export kind '" + std::string(name) +
                    "' (expected curves, scatter, bins, predicted-vs-actual or runs)");
}

std::string_view export_kind_name(ExportKind k) noexcept {
  switch (k) {
    case ExportKind::curves: return "curves";
    case ExportKind::scatter: return "scatter";
    case ExportKind::bins: return "bins";
    case ExportKind::pred: return "pred";
    case ExportKind::runs: return "runs";
  }
  return "?";
}

std::string curves_csv(const std::vector<RunRecord>& records) {
  std::ostringstream os;
  os << "run_id,epoch,val_loss,val_acc,hp_band\n";
  for (const auto& r : records) {
    const std::string band = bin_label(bin_index(r.hidden_proportion));
    for (std::size_t e = 0; e < r.val_losses.size(); ++e) {
      os << r.run_id << ',' << e + 1 << ',' << format_double(r.val_losses[e]) << ',';
      if (e < r.val_accuracy.size() && r.val_accuracy[e]) os << format_double(*r.val_accuracy[e]);
      os << ',' << band << '\n';
    }
  }
  return os.str();
}

std::string scatter_csv(const std::vector<RunRecord>& records) {
  std::ostringstream os;
  os << "run_id,block_id,block_sparsity,min_val_loss\n";
  for (const auto& r : records) {
    for (BlockId b : kAllBlocks) {
      os << r.run_id << ',' << block_name(b) << ',' << format_double(r.spec.block(b).sparsity) << ','
         << format_double(r.min_val_loss) << '\n';
    }
  }
  return os.str();
}

std::string bins_csv(const std::vector<RunRecord>& records) {
  std::ostringstream os;
  os << "metric,bin_lo,bin_hi,mean_min_loss,n,n_unstable,uc\n";
  if (records.empty()) return os.str();
  for (BinMetric m : {BinMetric::hidden_proportion, BinMetric::model_sparsity}) {
    const BinTable t = bin_summary(records, m);
    for (const auto& row : t.bins) {
      os << bin_metric_name(m) << ',' << format_double(row.lo) << ',' << format_double(row.hi) << ',';
      if (row.mean_min_loss) os << format_double(*row.mean_min_loss);
      os << ',' << row.n << ',' << row.n_unstable << ',' << (row.uc ? 1 : 0) << '\n';
    }
  }
  return os.str();
}

std::string pred_csv(const std::vector<RunRecord>& records, const Forest& forest) {
  std::ostringstream os;
  os << "run_id,actual_min_loss,predicted_min_loss\n";
  if (records.empty()) return os.str();
  const auto x = forest_features(records);
  const auto y = forest_targets(records);
  for (std::size_t i = 0; i < records.size(); ++i) {
    os << records[i].run_id << ',' << format_double(y[i]) << ',' << format_double(forest.predict(x[i])) << '\n';
  }
  return os.str();
}

std::string runs_csv(const std::vector<RunRecord>& records) {
  std::size_t epochs = 0;
  for (const auto& r : records) epochs = std::max(epochs, r.val_losses.size());
  std::ostringstream os;
  os << "run_id";
  for (const auto& name : feature_names()) os << ',' << name;
  os << ",hidden_dim,total_params,model_sparsity,stable,min_val_loss";
  for (std::size_t e = 0; e < epochs; ++e) os << ",loss_" << e + 1;
  os << '\n';
  for (const auto& r : records) {
    os << r.run_id;
    for (double v : r.features()) os << ',' << format_double(v);
    os << ',' << r.spec.hidden_dim << ',' << r.total_params << ',' << format_double(r.model_sparsity) << ','
       << (r.stable ? 1 : 0) << ',' << format_double(r.min_val_loss);
    for (std::size_t e = 0; e < epochs; ++e) {
      os << ',';
      if (e < r.val_losses.size()) os << format_double(r.val_losses[e]);
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace brnn
