#include "copulaflow/model_io.hpp"
#include "copulaflow/errors.hpp"

#include <json.hpp>

#include <bit>
#include <fstream>
#include <map>
#include <sstream>

namespace copulaflow {

namespace {

constexpr std::string_view kMagic = "COPULAFLOW-MODEL\n";
constexpr std::string_view kEndBlock = "END";

std::uint64_t
fnv1a(std::string_view bytes)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void
put_u64(std::string& out, std::uint64_t v)
{
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void
put_block(std::string& out, std::string_view name, const Eigen::Ref<const Eigen::VectorXd>& v)
{
  put_u64(out, name.size());
  out.append(name);
  put_u64(out, static_cast<std::uint64_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i)
    put_u64(out, std::bit_cast<std::uint64_t>(v(i)));
}

class Reader
{
public:
  Reader(std::string_view bytes, std::size_t pos)
    : bytes_(bytes)
    , pos_(pos)
  {}

  std::uint64_t u64()
  {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }

  std::string_view take(std::uint64_t n)
  {
    need(n);
    const auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }

private:
  void need(std::uint64_t n) const
  {
    if (n > bytes_.size() - pos_)
      throw IntegrityError("model file is truncated");
  }

  std::string_view bytes_;
  std::size_t pos_;
};

std::string
block_name(std::string_view prefix, std::size_t j, std::string_view suffix)
{
  return std::string(prefix) + "." + std::to_string(j) + "." + std::string(suffix);
}

} // namespace

std::string
serialize_model(const FittedModel& model)
{
  using nlohmann::json;
  json header;
  header["format"] = "copulaflow-model";
  header["version"] = kModelFormatVersion;

  std::string blocks;
  json schema = json::array();
  for (std::size_t j = 0; j < model.schema.columns.size(); ++j) {
    const auto& c = model.schema.columns[j];
    schema.push_back({ { "name", c.name }, { "kind", kind_name(c.kind) }, { "bounds", c.bounds.has_value() } });
    if (c.bounds)
      put_block(blocks, block_name("schema", j, "bounds"), Eigen::Vector2d(c.bounds->first, c.bounds->second));
  }
  header["schema"] = schema;

  json marginals = json::array();
  for (std::size_t j = 0; j < model.marginals.size(); ++j) {
    const auto& m = model.marginals[j];
    if (const auto* c = std::get_if<MarginalFlowModel>(&m)) {
      marginals.push_back({ { "type", "continuous" },
                            { "column_id", c->column_id() },
                            { "bins", c->params().bins() },
                            { "saturation_count", c->saturation_count } });
      put_block(blocks, block_name("marginal", j, "bounds"),
                Eigen::Vector2d(c->params().lower, c->params().upper));
      put_block(blocks, block_name("marginal", j, "params"), c->params().flat());
    } else {
      const auto& d = std::get<DiscreteMarginalFlow>(m);
      marginals.push_back({ { "type", "discrete" },
                            { "column_id", d.column_id() },
                            { "bins", d.latent().bins() },
                            { "ordinal", d.codec().ordinal() },
                            { "classes", d.codec().classes() } });
      put_block(blocks, block_name("marginal", j, "params"), d.latent().flat());
    }
  }
  header["marginals"] = marginals;

  if (model.copula) {
    const auto& s = *model.copula;
    json layers = json::array();
    for (std::size_t l = 0; l < s.layers.size(); ++l) {
      layers.push_back({ { "ordering", s.layers[l].ordering() } });
      put_block(blocks, "copula.layer" + std::to_string(l), s.layers[l].conditioner.parameters());
    }
    header["copula"] = { { "dim", s.dim }, { "k_bins", s.k_bins }, { "hidden", s.hidden }, { "layers", layers } };
  } else {
    header["copula"] = nullptr;
  }

  std::ostringstream cfg;
  write_config(cfg, model.metadata.config);
  header["metadata"] = { { "seed", model.metadata.seed },
                         { "transform_seed", model.metadata.transform_seed },
                         { "config", cfg.str() } };

  const std::string text = header.dump(2);
  std::string out(kMagic);
  out += std::to_string(text.size()) + "\n" + text + "\n";
  out += blocks;
  put_u64(out, kEndBlock.size());
  out.append(kEndBlock);
  put_u64(out, 0);
  put_u64(out, fnv1a(out));
  return out;
}

FittedModel
deserialize_model(const std::string& bytes)
{
  using nlohmann::json;
  if (bytes.compare(0, kMagic.size(), kMagic) != 0)
    throw IntegrityError("not a copulaflow model file");
  const auto nl = bytes.find('\n', kMagic.size());
  if (nl == std::string::npos)
    throw IntegrityError("model file is truncated");
  std::size_t header_len = 0;
  try {
    header_len = std::stoull(bytes.substr(kMagic.size(), nl - kMagic.size()));
  } catch (const std::exception&) {
    throw IntegrityError("model file header length is malformed");
  }
  if (header_len > bytes.size() - nl - 1)
    throw IntegrityError("model file is truncated");
  json header;
  try {
    header = json::parse(bytes.substr(nl + 1, header_len));
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("model file header is malformed: ") + e.what());
  }
  const int version = header.value("version", -1);
  if (version != kModelFormatVersion)
    throw VersionError(version, kModelFormatVersion);

  // Binary section, then the checksum over everything before it.
  Reader rd(bytes, nl + 1 + header_len + 1);
  std::map<std::string, Eigen::VectorXd, std::less<>> blocks;
  for (;;) {
    const std::string name(rd.take(rd.u64()));
    const std::uint64_t count = rd.u64();
    if (name == kEndBlock && count == 0)
      break;
    if (count > (bytes.size() - rd.pos()) / 8)
      throw IntegrityError("model file is truncated");
    Eigen::VectorXd v(static_cast<Eigen::Index>(count));
    for (std::uint64_t i = 0; i < count; ++i)
      v(static_cast<Eigen::Index>(i)) = std::bit_cast<double>(rd.u64());
    blocks.emplace(name, std::move(v));
  }
  const std::size_t body_end = rd.pos();
  const std::uint64_t checksum = rd.u64();
  if (checksum != fnv1a(std::string_view(bytes).substr(0, body_end)))
    throw IntegrityError("model file checksum mismatch");
  if (rd.pos() != bytes.size())
    throw IntegrityError("model file has trailing bytes");

  auto block = [&](const std::string& name) -> const Eigen::VectorXd& {
    const auto it = blocks.find(name);
    if (it == blocks.end())
      throw IntegrityError("model file is missing block '" + name + "'");
    return it->second;
  };

  try {
    FittedModel model;
    const auto& schema = header.at("schema");
    for (std::size_t j = 0; j < schema.size(); ++j) {
      ColumnSpec c;
      c.name = schema[j].at("name").get<std::string>();
      c.kind = parse_kind(schema[j].at("kind").get<std::string>());
      if (schema[j].at("bounds").get<bool>()) {
        const auto& b = block(block_name("schema", j, "bounds"));
        c.bounds = std::make_pair(b(0), b(1));
      }
      model.schema.columns.push_back(std::move(c));
    }
    model.schema.validate();

    const auto& marginals = header.at("marginals");
    if (marginals.size() != model.schema.columns.size())
      throw IntegrityError("model file marginal count does not match the schema");
    for (std::size_t j = 0; j < marginals.size(); ++j) {
      const auto& m = marginals[j];
      const auto id = m.at("column_id").get<std::string>();
      const auto& params = block(block_name("marginal", j, "params"));
      if (m.at("type") == "continuous") {
        const auto& b = block(block_name("marginal", j, "bounds"));
        MarginalFlowModel mm(RawSplineParamsd::from_flat(params, b(0), b(1)), id);
        mm.saturation_count = m.at("saturation_count").get<long>();
        model.marginals.emplace_back(std::move(mm));
      } else {
        CategoryCodec codec(m.at("classes").get<std::vector<std::string>>(), m.at("ordinal").get<bool>());
        const double upper = static_cast<double>(codec.n_classes()) - 1.0;
        model.marginals.emplace_back(
          DiscreteMarginalFlow(codec, RawSplineParamsd::from_flat(params, -1.0, upper), id));
      }
    }

    const auto& cop = header.at("copula");
    if (!cop.is_null()) {
      CopulaFlowStack s;
      s.dim = cop.at("dim").get<Eigen::Index>();
      s.k_bins = cop.at("k_bins").get<Eigen::Index>();
      s.hidden = cop.at("hidden").get<std::vector<Eigen::Index>>();
      const auto& layers = cop.at("layers");
      for (std::size_t l = 0; l < layers.size(); ++l) {
        MaskedConditioner mc(s.dim,
                             s.hidden,
                             s.params_per_dim(),
                             layers[l].at("ordering").get<std::vector<Eigen::Index>>(),
                             0);
        mc.set_parameters(block("copula.layer" + std::to_string(l)));
        s.layers.push_back({ std::move(mc), s.k_bins });
      }
      model.copula = std::move(s);
    }

    const auto& meta = header.at("metadata");
    model.metadata.seed = meta.at("seed").get<std::uint64_t>();
    model.metadata.transform_seed = meta.at("transform_seed").get<std::uint64_t>();
    std::istringstream cfg(meta.at("config").get<std::string>());
    model.metadata.config = parse_config(cfg);
    return model;
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("model file header is malformed: ") + e.what());
  } catch (const ConfigError& e) {
    throw IntegrityError(std::string("model file is inconsistent: ") + e.what());
  } catch (const ArgumentError& e) {
    throw IntegrityError(std::string("model file is inconsistent: ") + e.what());
  }
}

void
save_model(const FittedModel& model, const std::string& path)
{
  write_file_atomic(path, serialize_model(model));
}

FittedModel
load_model(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw DataError("cannot open model file '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

} // namespace copulaflow
