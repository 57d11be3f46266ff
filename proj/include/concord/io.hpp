#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "concord/core.hpp"
#include "concord/reconcile.hpp"

namespace concord {

/// Shortest text that parses back to the same 64-bit float.
std::string format_double(double v);

/// Dataset CSV: example_id,label[,feature...]; a header line is optional.
Dataset load_dataset_csv(const std::string& path);

/// Prediction CSV: example_id,prediction. Every dataset id must be covered,
/// no unknown ids, all values in [0,1]. Returns values aligned to data.
std::vector<double> load_predictions_csv(const std::string& path, const Dataset& data);

void write_predictions_csv(const std::string& path, const Dataset& data,
                           const std::vector<double>& values);

void write_rounds_csv(const std::string& path, const Transcript& transcript);

/// Mask file: one group per line; `all`, `none`, or comma-separated
/// example_ids. Unknown ids throw.
std::vector<GroupMask> load_masks(const std::string& path, const Dataset& data);

std::string read_file(const std::string& path);

/// Write-then-rename so readers never observe a partial file.
void atomic_write_file(const std::string& path, const std::string& content);

/// Lookup-table model over known example ids; unknown ids throw.
BaseModel table_model(const Dataset& data, const std::vector<double>& values);

}  // namespace concord
