#include "copulaflow/data.hpp"
#include "copulaflow/errors.hpp"
#include "copulaflow/random.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace copulaflow {

std::string
kind_name(ColumnKind kind)
{
  switch (kind) {
    case ColumnKind::continuous:
      return "continuous";
    case ColumnKind::ordinal:
      return "ordinal";
    case ColumnKind::categorical:
      return "categorical";
  }
  return "unknown";
}

ColumnKind
parse_kind(std::string_view name)
{
  for (auto k : { ColumnKind::continuous, ColumnKind::ordinal, ColumnKind::categorical })
    if (kind_name(k) == name)
      return k;
  throw ConfigError("unknown column kind '" + std::string(name) +
                    "' (expected continuous, ordinal or categorical)");
}

Eigen::Index
Schema::index_of(std::string_view name) const
{
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i].name == name)
      return static_cast<Eigen::Index>(i);
  return -1;
}

void
Schema::validate() const
{
  if (columns.empty())
    throw ConfigError("schema has no columns");
  std::set<std::string> seen;
  for (const auto& c : columns) {
    if (c.name.empty())
      throw ConfigError("schema column with an empty name");
    if (!seen.insert(c.name).second)
      throw ConfigError("duplicate schema column '" + c.name + "'");
    if (c.bounds) {
      if (c.discrete())
        throw ConfigError("column '" + c.name + "': bounds apply to continuous columns only");
      const auto [lo, hi] = *c.bounds;
      if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi))
        throw ConfigError("column '" + c.name + "': bounds need finite lower < upper");
    }
  }
}

namespace {

std::string_view
trim(std::string_view s)
{
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::optional<double>
parse_real(std::string_view s)
{
  s = trim(s);
  if (!s.empty() && s.front() == '+')
    s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    return std::nullopt;
  return v;
}

std::vector<std::string>
split_simple(std::string_view line)
{
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.emplace_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos)
      break;
    start = comma + 1;
  }
  return out;
}

struct CsvRecord
{
  std::vector<std::string> fields;
  long line = 0;
};

std::vector<CsvRecord>
parse_csv_records(std::istream& in)
{
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<CsvRecord> records;
  CsvRecord rec;
  std::string field;
  bool quoted = false, field_started = false;
  long line = 1;
  rec.line = 1;
  auto end_field = [&] {
    rec.fields.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    // A blank line is not a record.
    if (!(rec.fields.size() == 1 && rec.fields[0].empty()))
      records.push_back(std::move(rec));
    rec = CsvRecord{};
    rec.line = line;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (ch == '\n')
          ++line;
        field += ch;
      }
      continue;
    }
    switch (ch) {
      case '"':
        if (field_started && !trim(field).empty())
          throw DataError("line " + std::to_string(line) + ": stray quote in unquoted field");
        field.clear();
        quoted = true;
        field_started = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n')
          break;
        [[fallthrough]];
      case '\n':
        ++line;
        end_record();
        break;
      default:
        field += ch;
        field_started = true;
    }
  }
  if (quoted)
    throw DataError("line " + std::to_string(line) + ": unterminated quoted field");
  if (field_started || !field.empty() || !rec.fields.empty())
    end_record();
  return records;
}

bool
needs_quotes(const std::string& s)
{
  return s.empty() || s.find_first_of(",\"\r\n") != std::string::npos ||
         s.front() == ' ' || s.back() == ' ';
}

std::string
quote(const std::string& s)
{
  if (!needs_quotes(s))
    return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"')
      out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string
cell_error(Eigen::Index row, const std::string& column, const std::string& what)
{
  return "row " + std::to_string(row + 1) + ", column \"" + column + "\": " + what;
}

} // namespace

Schema
parse_schema(std::istream& in)
{
  Schema schema;
  std::string line;
  long number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#')
      continue;
    const auto f = split_simple(t);
    const std::string where = "schema line " + std::to_string(number) + ": ";
    if (f.size() != 2 && f.size() != 4)
      throw ConfigError(where + "expected name,kind[,lower,upper]");
    ColumnSpec c;
    c.name = f[0];
    try {
      c.kind = parse_kind(f[1]);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
    if (f.size() == 4) {
      const auto lo = parse_real(f[2]), hi = parse_real(f[3]);
      if (!lo || !hi)
        throw ConfigError(where + "bounds must be finite numbers");
      c.bounds = std::make_pair(*lo, *hi);
    }
    schema.columns.push_back(std::move(c));
  }
  schema.validate();
  return schema;
}

Schema
load_schema(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot open schema file '" + path + "'");
  return parse_schema(in);
}

void
write_schema(std::ostream& out, const Schema& schema)
{
  for (const auto& c : schema.columns) {
    out << c.name << ',' << kind_name(c.kind);
    if (c.bounds)
      out << ',' << format_double(c.bounds->first) << ',' << format_double(c.bounds->second);
    out << '\n';
  }
}

void
save_schema(const Schema& schema, const std::string& path)
{
  std::ostringstream os;
  write_schema(os, schema);
  write_file_atomic(path, os.str());
}

Eigen::VectorXi
Dataset::codes(Eigen::Index column) const
{
  if (!schema.columns[static_cast<std::size_t>(column)].discrete())
    throw ArgumentError("column '" + schema.columns[static_cast<std::size_t>(column)].name +
                        "' is not discrete");
  return values.col(column).cast<int>();
}

std::string
Dataset::cell_text(Eigen::Index row, Eigen::Index column) const
{
  const auto& codec = codecs[static_cast<std::size_t>(column)];
  if (codec)
    return codec->decode(static_cast<int>(values(row, column)));
  return format_double(values(row, column));
}

double
Dataset::numeric(Eigen::Index row, Eigen::Index column) const
{
  const auto& codec = codecs[static_cast<std::size_t>(column)];
  if (codec)
    return codec->numeric_value(static_cast<int>(values(row, column)));
  return values(row, column);
}

void
Dataset::validate() const
{
  schema.validate();
  if (values.cols() != schema.size() || static_cast<Eigen::Index>(codecs.size()) != schema.size())
    throw DataError("dataset shape does not match its schema");
  for (Eigen::Index j = 0; j < schema.size(); ++j) {
    const auto& spec = schema.columns[static_cast<std::size_t>(j)];
    const auto& codec = codecs[static_cast<std::size_t>(j)];
    if (spec.discrete() != codec.has_value())
      throw DataError("column '" + spec.name + "' codec does not match its kind");
    if (!values.col(j).allFinite())
      throw DataError("column '" + spec.name + "' has missing or non-finite values");
    if (codec)
      for (Eigen::Index i = 0; i < rows(); ++i) {
        const double v = values(i, j);
        if (v != std::floor(v) || v < 0 || v >= codec->n_classes())
          throw DataError(cell_error(i, spec.name, "code outside the codec range"));
      }
  }
}

Dataset
read_csv(std::istream& in, const Schema& schema, const Codecs* codecs)
{
  schema.validate();
  auto records = parse_csv_records(in);
  if (records.empty())
    throw DataError("empty CSV file (no header)");
  const auto& header = records.front().fields;
  const std::size_t d = schema.columns.size();
  std::vector<std::size_t> source(d);
  for (std::size_t j = 0; j < d; ++j) {
    const auto& name = schema.columns[j].name;
    const auto it = std::find_if(header.begin(), header.end(),
                                 [&](const std::string& h) { return trim(h) == name; });
    if (it == header.end())
      throw DataError("CSV header is missing column \"" + name + "\"");
    source[j] = static_cast<std::size_t>(it - header.begin());
  }
  if (header.size() != d)
    throw DataError("CSV header has " + std::to_string(header.size()) +
                    " columns but the schema declares " + std::to_string(d));
  if (codecs && codecs->size() != d)
    throw ArgumentError("codec list does not match the schema");

  const Eigen::Index n = static_cast<Eigen::Index>(records.size()) - 1;
  Dataset out;
  out.schema = schema;
  out.values.resize(n, static_cast<Eigen::Index>(d));
  out.codecs.resize(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& rec = records[static_cast<std::size_t>(i + 1)];
    if (rec.fields.size() != header.size())
      throw DataError("row " + std::to_string(i + 1) + " (line " + std::to_string(rec.line) +
                      ") has " + std::to_string(rec.fields.size()) + " fields, expected " +
                      std::to_string(header.size()));
  }
  for (std::size_t j = 0; j < d; ++j) {
    const auto& spec = schema.columns[j];
    const auto col = static_cast<Eigen::Index>(j);
    auto cell = [&](Eigen::Index i) -> const std::string& {
      return records[static_cast<std::size_t>(i + 1)].fields[source[j]];
    };
    for (Eigen::Index i = 0; i < n; ++i)
      if (trim(cell(i)).empty())
        throw DataError(cell_error(i, spec.name, "missing value"));
    if (!spec.discrete()) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto v = parse_real(cell(i));
        if (!v)
          throw DataError(cell_error(i, spec.name, "cannot parse \"" + cell(i) + "\" as a number"));
        out.values(i, col) = *v;
      }
      continue;
    }
    const bool ordinal = spec.kind == ColumnKind::ordinal;
    std::vector<std::string> labels(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      std::string label = ordinal ? std::string(trim(cell(i))) : cell(i);
      if (ordinal) {
        try {
          label = canonical_ordinal(label);
        } catch (const DataError&) {
          throw DataError(cell_error(i, spec.name, "cannot parse \"" + cell(i) + "\" as an integer"));
        }
      }
      labels[static_cast<std::size_t>(i)] = std::move(label);
    }
    if (codecs) {
      const auto& given = (*codecs)[j];
      if (!given || given->ordinal() != ordinal)
        throw ArgumentError("codec for column '" + spec.name + "' does not match its kind");
      out.codecs[j] = *given;
    } else {
      if (n == 0)
        throw DataError("column '" + spec.name + "': no rows to build the category codec from");
      try {
        out.codecs[j] = build_codec(labels, ordinal);
      } catch (const DataError& e) {
        throw DegenerateDataError("column '" + spec.name + "': " + e.what());
      }
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      try {
        out.values(i, col) = out.codecs[j]->encode(labels[static_cast<std::size_t>(i)]);
      } catch (const DataError& e) {
        throw DataError(cell_error(i, spec.name, e.what()));
      }
    }
  }
  return out;
}

Dataset
load_csv(const std::string& path, const Schema& schema, const Codecs* codecs)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw DataError("cannot open data file '" + path + "'");
  try {
    return read_csv(in, schema, codecs);
  } catch (const DegenerateDataError& e) {
    throw DegenerateDataError(path + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

std::string
format_double(double v)
{
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc())
    throw ArgumentError("cannot format number");
  return std::string(buf, ptr);
}

void
write_csv(std::ostream& out, const Dataset& data)
{
  const Eigen::Index d = data.cols();
  for (Eigen::Index j = 0; j < d; ++j)
    out << (j ? "," : "") << quote(data.schema.columns[static_cast<std::size_t>(j)].name);
  out << '\n';
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (Eigen::Index j = 0; j < d; ++j)
      out << (j ? "," : "") << quote(data.cell_text(i, j));
    out << '\n';
  }
}

void
save_csv(const Dataset& data, const std::string& path)
{
  std::ostringstream os;
  write_csv(os, data);
  write_file_atomic(path, os.str());
}

Dataset
dataset_from_matrix(const Schema& schema, const Eigen::MatrixXd& raw)
{
  schema.validate();
  if (raw.cols() != schema.size())
    throw DataError("matrix has " + std::to_string(raw.cols()) + " columns, schema has " +
                    std::to_string(schema.size()));
  Dataset out;
  out.schema = schema;
  out.values = raw;
  out.codecs.resize(schema.columns.size());
  for (Eigen::Index j = 0; j < raw.cols(); ++j) {
    const auto& spec = schema.columns[static_cast<std::size_t>(j)];
    if (!spec.discrete())
      continue;
    std::vector<std::string> labels(static_cast<std::size_t>(raw.rows()));
    for (Eigen::Index i = 0; i < raw.rows(); ++i) {
      const double v = raw(i, j);
      if (!(std::isfinite(v) && v == std::round(v)))
        throw DataError(cell_error(i, spec.name, "discrete value is not an integer"));
      labels[static_cast<std::size_t>(i)] = std::to_string(static_cast<long long>(v));
    }
    if (labels.empty())
      throw DataError("column '" + spec.name + "': no rows to build the category codec from");
    CategoryCodec codec;
    try {
      codec = build_codec(labels, spec.kind == ColumnKind::ordinal);
    } catch (const DegenerateDataError& e) {
      throw DegenerateDataError("column '" + spec.name + "': " + e.what());
    }
    for (Eigen::Index i = 0; i < raw.rows(); ++i)
      out.values(i, j) = codec.encode(labels[static_cast<std::size_t>(i)]);
    out.codecs[static_cast<std::size_t>(j)] = std::move(codec);
  }
  return out;
}

Dataset
subset_rows(const Dataset& data, const std::vector<Eigen::Index>& rows)
{
  Dataset out;
  out.schema = data.schema;
  out.codecs = data.codecs;
  out.values.resize(static_cast<Eigen::Index>(rows.size()), data.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.values.row(static_cast<Eigen::Index>(i)) = data.values.row(rows[i]);
  return out;
}

DataSplit
split(const Dataset& data, const SplitFractions& f, std::uint64_t seed)
{
  if (!(f.train > 0.0 && f.val > 0.0 && f.test > 0.0) || f.train + f.val + f.test > 1.0 + 1e-12)
    throw ConfigError("split fractions must be positive and sum to at most 1");
  const Eigen::Index n = data.rows();
  const auto count = [n](double frac) {
    return static_cast<Eigen::Index>(std::llround(frac * static_cast<double>(n)));
  };
  const Eigen::Index n_train = count(f.train);
  const Eigen::Index n_val = std::min(count(f.val), n - n_train);
  const Eigen::Index n_test = std::min(count(f.test), n - n_train - n_val);
  if (n_train < 1 || n_val < 1 || n_test < 1)
    throw DataError("dataset with " + std::to_string(n) +
                    " rows is too small for three nonempty parts");

  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    perm[static_cast<std::size_t>(i)] = i;
  Rng rng(derive_seed(seed, "split"));
  for (Eigen::Index i = n - 1; i > 0; --i)
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(rng.index(i + 1))]);
  auto part = [&](Eigen::Index begin, Eigen::Index len) {
    std::vector<Eigen::Index> rows(perm.begin() + begin, perm.begin() + begin + len);
    std::sort(rows.begin(), rows.end());
    return subset_rows(data, rows);
  };
  return { part(0, n_train), part(n_train, n_val), part(n_train + n_val, n_test) };
}

void
write_file_atomic(const std::string& path, const std::string& bytes)
{
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw DataError("cannot write '" + tmp + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out)
      throw DataError("failed writing '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw DataError("cannot replace '" + path + "'");
  }
}

} // namespace copulaflow
