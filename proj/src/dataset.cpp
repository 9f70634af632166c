#include "dguide/dataset.hpp"

#include "dguide/rng.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>

namespace dguide {

std::string to_string(MissingPattern p) {
  switch (p) {
    case MissingPattern::TwoDataset: return "two_dataset";
    case MissingPattern::TypeI: return "type_i";
    case MissingPattern::TypeII: return "type_ii";
    case MissingPattern::Complete: return "complete";
  }
  return "?";
}

MissingPattern parse_missing_pattern(const std::string& s) {
  if (s == "two_dataset") return MissingPattern::TwoDataset;
  if (s == "type_i") return MissingPattern::TypeI;
  if (s == "type_ii") return MissingPattern::TypeII;
  if (s == "complete") return MissingPattern::Complete;
  throw ConfigError("unknown missing pattern '" + s + "'");
}

int source_count(MissingPattern pattern) {
  switch (pattern) {
    case MissingPattern::TwoDataset:
    case MissingPattern::TypeI: return 2;
    case MissingPattern::TypeII: return 3;
    case MissingPattern::Complete: return 1;
  }
  return 0;
}

std::vector<int> present_blocks(MissingPattern pattern, int source, int block_count) {
  if (source < 0 || source >= source_count(pattern)) {
    throw ConfigError("present_blocks: source " + std::to_string(source) + " not in pattern " +
                      to_string(pattern));
  }
  switch (pattern) {
    case MissingPattern::TwoDataset:
      if (block_count != 2) throw ConfigError("two_dataset pattern needs exactly 2 blocks");
      return {source};
    case MissingPattern::TypeI:
      if (block_count != 3) throw ConfigError("type_i pattern needs exactly 3 blocks");
      return {source, 2};
    case MissingPattern::TypeII:
      if (block_count != 3) throw ConfigError("type_ii pattern needs exactly 3 blocks");
      return {source};
    case MissingPattern::Complete: {
      std::vector<int> all(block_count);
      for (int b = 0; b < block_count; ++b) all[b] = b;
      return all;
    }
  }
  return {};
}

BlockwiseDataset::BlockwiseDataset(MissingPattern pattern, int block_count,
                                   std::vector<DatasetRow> rows)
    : pattern_(pattern), block_count_(block_count), rows_(std::move(rows)) {
  std::vector<int> per_source(source_count(pattern), 0);
  for (const auto& r : rows_) {
    if (r.x0.size() != rows_.front().x0.size()) throw ConfigError("dataset: ragged x0");
    const auto expected = present_blocks(pattern, r.source, block_count);
    for (int b = 0; b < kMaxBlocks; ++b) {
      const bool want = std::find(expected.begin(), expected.end(), b) != expected.end();
      if (want != r.conditions.has(b)) {
        throw ConfigError("dataset: row from source " + std::to_string(r.source + 1) +
                          " does not match pattern " + to_string(pattern));
      }
    }
    ++per_source[r.source];
  }
  for (std::size_t j = 0; j < per_source.size(); ++j) {
    if (per_source[j] == 0) {
      throw ConfigError("dataset: source D" + std::to_string(j + 1) + " has no rows");
    }
  }
}

BlockwiseDataset BlockwiseDataset::subset(const std::vector<int>& sources) const {
  BlockwiseDataset d = *this;
  d.rows_.clear();
  for (const auto& r : rows_) {
    if (std::find(sources.begin(), sources.end(), r.source) != sources.end()) d.rows_.push_back(r);
  }
  return d;
}

std::pair<Matrix, Matrix> BlockwiseDataset::block_pairs(int b) const {
  int n = 0;
  int m = 0;
  for (const auto& r : rows_) {
    if (r.conditions.has(b)) {
      ++n;
      m = static_cast<int>(r.conditions.at(b).size());
    }
  }
  Matrix x(dim(), n);
  Matrix y(m, n);
  int j = 0;
  for (const auto& r : rows_) {
    if (!r.conditions.has(b)) continue;
    x.col(j) = r.x0;
    y.col(j) = r.conditions.at(b);
    ++j;
  }
  return {std::move(x), std::move(y)};
}

int BlockwiseDataset::count_source(int source) const {
  int n = 0;
  for (const auto& r : rows_) n += (r.source == source);
  return n;
}

void BlockwiseDataset::write_csv(std::ostream& out) const {
  out << "# dguide-dataset v1 pattern=" << to_string(pattern_) << " blocks=" << block_count_ << '\n';
  // Block widths, needed to read empty cells back.
  std::vector<int> widths(block_count_, 0);
  for (const auto& r : rows_)
    for (int b = 0; b < block_count_; ++b)
      if (r.conditions.has(b)) widths[b] = static_cast<int>(r.conditions.at(b).size());
  out << "source";
  for (int i = 0; i < dim(); ++i) out << ",x" << i + 1;
  for (int b = 0; b < block_count_; ++b)
    for (int i = 0; i < widths[b]; ++i) out << ",c" << b + 1 << "_" << i + 1;
  out << '\n';
  out.precision(17);
  for (const auto& r : rows_) {
    out << r.source + 1;
    for (int i = 0; i < dim(); ++i) out << ',' << r.x0(i);
    for (int b = 0; b < block_count_; ++b) {
      for (int i = 0; i < widths[b]; ++i) {
        out << ',';
        if (r.conditions.has(b)) out << r.conditions.at(b)(i);
      }
    }
    out << '\n';
  }
}

BlockwiseDataset BlockwiseDataset::read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("# dguide-dataset v1", 0) != 0) {
    throw ConfigError("dataset csv: missing 'dguide-dataset v1' header");
  }
  const auto pat_pos = line.find("pattern=");
  const auto blk_pos = line.find("blocks=");
  if (pat_pos == std::string::npos || blk_pos == std::string::npos) {
    throw ConfigError("dataset csv: malformed header");
  }
  const std::string pat = line.substr(pat_pos + 8, line.find(' ', pat_pos) - pat_pos - 8);
  const int block_count = std::stoi(line.substr(blk_pos + 7));
  const MissingPattern pattern = parse_missing_pattern(pat);

  std::getline(in, line);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  int d = 0;
  std::vector<int> block_of;
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (header[c][0] == 'x') {
      ++d;
      block_of.push_back(-1);
    } else {
      block_of.push_back(std::stoi(header[c].substr(1, header[c].find('_') - 1)) - 1);
    }
  }
  std::vector<DatasetRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    while (cells.size() < header.size()) cells.emplace_back();
    DatasetRow r;
    r.source = std::stoi(cells[0]) - 1;
    r.x0.resize(d);
    std::vector<std::vector<double>> vals(block_count);
    std::vector<bool> present(block_count, false);
    for (std::size_t c = 1; c < cells.size(); ++c) {
      const int b = block_of[c - 1];
      if (b < 0) {
        r.x0(static_cast<int>(c - 1)) = std::stod(cells[c]);
      } else if (!cells[c].empty()) {
        vals[b].push_back(std::stod(cells[c]));
        present[b] = true;
      }
    }
    for (int b = 0; b < block_count; ++b) {
      if (present[b]) r.conditions.set(b, Eigen::Map<const Vector>(vals[b].data(), vals[b].size()));
    }
    rows.push_back(std::move(r));
  }
  return BlockwiseDataset(pattern, block_count, std::move(rows));
}

BlockwiseDataset generate_dataset(const GaussianMixture& gm, const LinearObservationModel& model,
                                  MissingPattern pattern, const std::vector<int>& sizes,
                                  std::uint64_t seed) {
  if (static_cast<int>(sizes.size()) != source_count(pattern)) {
    throw ConfigError("generate_dataset: pattern " + to_string(pattern) + " needs " +
                      std::to_string(source_count(pattern)) + " dataset sizes");
  }
  std::vector<DatasetRow> rows;
  for (int j = 0; j < static_cast<int>(sizes.size()); ++j) {
    if (sizes[j] < 1) throw ConfigError("generate_dataset: every dataset needs >= 1 row");
    const Matrix x = gm.sample_matrix(sizes[j], derive_seed(seed, stream::kDataset, 2 * j));
    const auto blocks = present_blocks(pattern, j, model.block_count());
    Engine engine = make_engine(derive_seed(seed, stream::kDataset, 2 * j + 1));
    for (int i = 0; i < sizes[j]; ++i) {
      DatasetRow r;
      r.x0 = x.col(i);
      r.source = j;
      const Vector y = model.observe(r.x0, engine());
      for (int b : blocks) r.conditions.set(b, model.block_slice(y, b));
      rows.push_back(std::move(r));
    }
  }
  return BlockwiseDataset(pattern, model.block_count(), std::move(rows));
}

}  // namespace dguide
