#pragma once

#include "dguide/gm_oracle.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace dguide {

/// Which condition blocks each source dataset annotates.
///   TwoDataset: D1 = (X0, C1), D2 = (X0, C2)
///   TypeI:      D1 = (X0, C1, C3), D2 = (X0, C2, C3)
///   TypeII:     D1 = (X0, C1), D2 = (X0, C2), D3 = (X0, C3)
///   Complete:   one dataset annotating every block (imputed or single-source data)
enum class MissingPattern { TwoDataset, TypeI, TypeII, Complete };

std::string to_string(MissingPattern p);
MissingPattern parse_missing_pattern(const std::string& s);

/// Blocks present for rows from source `source` under `pattern`.
std::vector<int> present_blocks(MissingPattern pattern, int source, int block_count);
int source_count(MissingPattern pattern);

struct DatasetRow {
  Vector x0;
  Conditions conditions;
  int source = 0;
};

class BlockwiseDataset {
 public:
  BlockwiseDataset(MissingPattern pattern, int block_count, std::vector<DatasetRow> rows);

  MissingPattern pattern() const { return pattern_; }
  int block_count() const { return block_count_; }
  int dim() const { return rows_.empty() ? 0 : static_cast<int>(rows_.front().x0.size()); }
  int size() const { return static_cast<int>(rows_.size()); }
  const DatasetRow& row(int i) const { return rows_[i]; }
  const std::vector<DatasetRow>& rows() const { return rows_; }

  /// Rows from the given source(s). Keeps the pattern; other sources may be absent.
  BlockwiseDataset subset(const std::vector<int>& sources) const;
  /// Rows carrying block b as (X0 matrix d×n, value matrix m×n).
  std::pair<Matrix, Matrix> block_pairs(int b) const;
  int count_source(int source) const;

  void write_csv(std::ostream& out) const;
  static BlockwiseDataset read_csv(std::istream& in);

 private:
  MissingPattern pattern_;
  int block_count_;
  std::vector<DatasetRow> rows_;
};

/// Draws sizes[j] rows for each source j: X0 from the prior, all blocks
/// observed with noise, then masked to the pattern.
BlockwiseDataset generate_dataset(const GaussianMixture& gm, const LinearObservationModel& model,
                                  MissingPattern pattern, const std::vector<int>& sizes,
                                  std::uint64_t seed);

}  // namespace dguide
