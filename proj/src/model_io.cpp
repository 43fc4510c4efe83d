#include "hrd/model_io.hpp"

#include <cstdio>
#include <sstream>

#include <zlib.h>

#include "hrd/text_io.hpp"

namespace hrd::nn {

namespace {

using json = nlohmann::json;
constexpr const char* kMagic = "hrd-mlp";

std::uint32_t crc_of(std::string_view body) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()));
  return static_cast<std::uint32_t>(crc);
}

template <typename M>
json matrix_json(const M& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()},
          {"values", std::vector<double>(m.data(), m.data() + m.size())}};
}

template <typename M>
void read_matrix(const json& j, M& m, const char* what) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto values = j.at("values").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != values.size()) {
    throw ModelFormatError(ModelFormatError::Kind::schema, std::string("bad shape for ") + what);
  }
  if constexpr (M::RowsAtCompileTime == 1) {
    if (rows != 1) throw ModelFormatError(ModelFormatError::Kind::schema, std::string(what) + " must be a row");
    m.resize(cols);
  } else {
    m.resize(rows, cols);
  }
  std::copy(values.begin(), values.end(), m.data());
}

json range_json(const Range& r) { return {r.lo, r.hi}; }

}  // namespace

std::string serialize_model(const MLPModel& model, const json& metadata) {
  json arch{{"input_width", model.arch.input_width},
            {"hidden", model.arch.hidden},
            {"output_width", model.arch.output_width},
            {"dropout", model.arch.dropout},
            {"bn_epsilon", model.arch.bn_epsilon},
            {"bn_momentum", model.arch.bn_momentum},
            {"activation", "relu"}};
  json hidden = json::array();
  for (const auto& b : model.hidden) {
    hidden.push_back({{"weight", matrix_json(b.dense.weight)},
                      {"bias", matrix_json(b.dense.bias)},
                      {"gamma", matrix_json(b.norm.gamma)},
                      {"beta", matrix_json(b.norm.beta)},
                      {"running_mean", matrix_json(b.norm.running_mean)},
                      {"running_var", matrix_json(b.norm.running_var)}});
  }
  json outputs = json::array();
  for (const auto& r : model.normalization.output) outputs.push_back(range_json(r));
  json body{
      {"format", kMagic},
      {"version", kModelFormatVersion},
      {"architecture", arch},
      {"grid", {{"start", model.grid.start}, {"step", model.grid.step}, {"count", model.grid.count}}},
      {"normalization",
       {{"input_mean", model.normalization.input_mean},
        {"input_std", model.normalization.input_std},
        {"output_ranges", outputs}}},
      {"parameters",
       {{"hidden", hidden},
        {"output", {{"weight", matrix_json(model.output.weight)}, {"bias", matrix_json(model.output.bias)}}}}},
      {"metadata", metadata.is_null() ? json::object() : metadata},
  };
  const std::string text = body.dump() + "\n";
  char header[96];
  std::snprintf(header, sizeof(header), "%s %d %08x %zu\n", kMagic, kModelFormatVersion, crc_of(text),
                text.size());
  return header + text;
}

MLPModel deserialize_model(const std::string& contents, json* metadata) {
  const auto nl = contents.find('\n');
  if (nl == std::string::npos) throw ModelFormatError(ModelFormatError::Kind::checksum, "model file truncated: no header");
  std::istringstream header(contents.substr(0, nl));
  std::string magic, crc_hex;
  int version = 0;
  std::size_t length = 0;
  if (!(header >> magic >> version) || magic != kMagic) {
    throw ModelFormatError(ModelFormatError::Kind::schema, "not an hrd model file");
  }
  if (version != kModelFormatVersion) {
    throw ModelFormatError(ModelFormatError::Kind::version,
                           "model format version " + std::to_string(version) + " is not supported (expected " +
                               std::to_string(kModelFormatVersion) + ")");
  }
  if (!(header >> crc_hex >> length)) throw ModelFormatError(ModelFormatError::Kind::schema, "malformed model header");
  const std::string_view body = std::string_view(contents).substr(nl + 1);
  std::uint32_t expected = 0;
  try {
    expected = static_cast<std::uint32_t>(std::stoul(crc_hex, nullptr, 16));
  } catch (const std::exception&) {
    throw ModelFormatError(ModelFormatError::Kind::schema, "malformed checksum field");
  }
  if (body.size() != length || crc_of(body) != expected) {
    throw ModelFormatError(ModelFormatError::Kind::checksum, "model checksum mismatch (file truncated or corrupted)");
  }

  try {
    const json j = json::parse(body);
    if (j.at("version").get<int>() != kModelFormatVersion) {
      throw ModelFormatError(ModelFormatError::Kind::version, "body version mismatch");
    }
    MLPModel m;
    const auto& a = j.at("architecture");
    m.arch.input_width = a.at("input_width").get<std::size_t>();
    m.arch.hidden = a.at("hidden").get<std::vector<std::size_t>>();
    m.arch.output_width = a.at("output_width").get<std::size_t>();
    m.arch.dropout = a.at("dropout").get<double>();
    m.arch.bn_epsilon = a.at("bn_epsilon").get<double>();
    m.arch.bn_momentum = a.at("bn_momentum").get<double>();
    m.arch.validate();

    const auto& g = j.at("grid");
    m.grid = {g.at("start").get<double>(), g.at("step").get<double>(), g.at("count").get<std::size_t>()};

    const auto& n = j.at("normalization");
    m.normalization.input_mean = n.at("input_mean").get<std::vector<double>>();
    m.normalization.input_std = n.at("input_std").get<std::vector<double>>();
    const auto& outs = n.at("output_ranges");
    if (outs.size() != 6) throw ModelFormatError(ModelFormatError::Kind::schema, "expected 6 output ranges");
    for (std::size_t k = 0; k < 6; ++k) m.normalization.output[k] = {outs[k][0].get<double>(), outs[k][1].get<double>()};

    const auto& p = j.at("parameters");
    const auto& hidden = p.at("hidden");
    if (hidden.size() != m.arch.hidden.size()) throw ModelFormatError(ModelFormatError::Kind::schema, "layer count mismatch");
    std::size_t in = m.arch.input_width;
    for (std::size_t k = 0; k < hidden.size(); ++k) {
      HiddenBlock b;
      read_matrix(hidden[k].at("weight"), b.dense.weight, "weight");
      read_matrix(hidden[k].at("bias"), b.dense.bias, "bias");
      read_matrix(hidden[k].at("gamma"), b.norm.gamma, "gamma");
      read_matrix(hidden[k].at("beta"), b.norm.beta, "beta");
      read_matrix(hidden[k].at("running_mean"), b.norm.running_mean, "running_mean");
      read_matrix(hidden[k].at("running_var"), b.norm.running_var, "running_var");
      const auto w = static_cast<Eigen::Index>(m.arch.hidden[k]);
      if (b.dense.weight.rows() != static_cast<Eigen::Index>(in) || b.dense.weight.cols() != w ||
          b.dense.bias.size() != w || b.norm.gamma.size() != w || b.norm.running_var.size() != w) {
        throw ModelFormatError(ModelFormatError::Kind::schema, "hidden layer " + std::to_string(k) + " has wrong shape");
      }
      m.hidden.push_back(std::move(b));
      in = m.arch.hidden[k];
    }
    read_matrix(p.at("output").at("weight"), m.output.weight, "output weight");
    read_matrix(p.at("output").at("bias"), m.output.bias, "output bias");
    if (m.output.weight.rows() != static_cast<Eigen::Index>(in) ||
        m.output.weight.cols() != static_cast<Eigen::Index>(m.arch.output_width)) {
      throw ModelFormatError(ModelFormatError::Kind::schema, "output layer has wrong shape");
    }
    if (metadata) *metadata = j.value("metadata", json::object());
    return m;
  } catch (const json::exception& e) {
    throw ModelFormatError(ModelFormatError::Kind::schema, std::string("malformed model body: ") + e.what());
  }
}

void save_model(const MLPModel& model, const std::filesystem::path& path, const json& metadata) {
  try {
    write_file(path, serialize_model(model, metadata));
  } catch (const IoError& e) {
    throw ModelFormatError(ModelFormatError::Kind::io, e.what());
  }
}

MLPModel load_model(const std::filesystem::path& path, json* metadata) {
  std::string contents;
  try {
    contents = read_file(path);
  } catch (const IoError& e) {
    throw ModelFormatError(ModelFormatError::Kind::io, e.what());
  }
  return deserialize_model(contents, metadata);
}

}  // namespace hrd::nn
