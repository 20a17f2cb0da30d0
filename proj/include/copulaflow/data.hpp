#pragma once

// Tabular data: schema, column-major dataset, CSV and schema files, splits.

#include "copulaflow/discrete.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace copulaflow {

enum class ColumnKind
{
  continuous,
  ordinal,
  categorical
};

std::string
kind_name(ColumnKind kind);

ColumnKind
parse_kind(std::string_view name);

struct ColumnSpec
{
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
  //! Explicit support for continuous columns.
  std::optional<std::pair<double, double>> bounds;

  bool discrete() const { return kind != ColumnKind::continuous; }
  bool operator==(const ColumnSpec&) const = default;
};

struct Schema
{
  std::vector<ColumnSpec> columns;

  Eigen::Index size() const { return static_cast<Eigen::Index>(columns.size()); }
  //! -1 if absent.
  Eigen::Index index_of(std::string_view name) const;
  //! Throws ConfigError on duplicate or empty names, an empty schema, bounds
  //! on a discrete column or bounds with lower >= upper.
  void validate() const;
  bool operator==(const Schema&) const = default;
};

//! Schema file: one `name,kind[,lower,upper]` line per column; blank lines
//! and lines starting with '#' are skipped.
Schema
parse_schema(std::istream& in);

Schema
load_schema(const std::string& path);

void
write_schema(std::ostream& out, const Schema& schema);

void
save_schema(const Schema& schema, const std::string& path);

using Codecs = std::vector<std::optional<CategoryCodec>>;

//! Column-major table. Discrete columns hold integer codes (stored as
//! doubles) into the codec of the same column.
struct Dataset
{
  Schema schema;
  Eigen::MatrixXd values; //!< rows x columns
  Codecs codecs;          //!< one per column; empty for continuous

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  Eigen::VectorXi codes(Eigen::Index column) const;
  //! Label of a cell as written to CSV.
  std::string cell_text(Eigen::Index row, Eigen::Index column) const;
  //! Numeric value of a cell: the real value, the ordinal integer, or the
  //! categorical code.
  double numeric(Eigen::Index row, Eigen::Index column) const;
  //! Checks shapes, finiteness and code ranges.
  void validate() const;
};

//! Parses RFC-4180 CSV. Header names must match the schema in any order.
//! Codecs are built from the data unless `codecs` is given, in which case
//! every label must be known to it.
Dataset
read_csv(std::istream& in, const Schema& schema, const Codecs* codecs = nullptr);

Dataset
load_csv(const std::string& path, const Schema& schema, const Codecs* codecs = nullptr);

//! Reals are written in shortest round-trip form.
void
write_csv(std::ostream& out, const Dataset& data);

void
save_csv(const Dataset& data, const std::string& path);

std::string
format_double(double v);

//! Dataset from raw numeric values, e.g. generator output. Discrete columns
//! must hold integers; their codecs are built from the observed values.
Dataset
dataset_from_matrix(const Schema& schema, const Eigen::MatrixXd& raw);

Dataset
subset_rows(const Dataset& data, const std::vector<Eigen::Index>& rows);

struct SplitFractions
{
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct DataSplit
{
  Dataset train;
  Dataset val;
  Dataset test;
};

//! Seeded shuffle cut into round(f * n) rows per part. Rows beyond the sum of
//! the fractions are dropped.
DataSplit
split(const Dataset& data, const SplitFractions& fractions, std::uint64_t seed);

//! Replaces `path` in one step: writes `path.tmp` and renames it.
void
write_file_atomic(const std::string& path, const std::string& bytes);

} // namespace copulaflow
