#include "unlearn/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "unlearn/error.hpp"

namespace unlearn {

using nlohmann::json;

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kBlob = "params.bin";

void write_le_double(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

double read_le_double(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw Error("checkpoint blob truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

void write_checkpoint(const std::filesystem::path& dir, const ParameterSet& params, json manifest) {
  std::filesystem::create_directories(dir);
  json tensors = json::array();
  for (const auto& t : params.tensors()) tensors.push_back({{"name", t.name}, {"rows", t.value.rows()}, {"cols", t.value.cols()}});
  manifest["tensors"] = std::move(tensors);
  manifest["blob"] = kBlob;
  manifest["dtype"] = "float64-le";
  {
    std::ofstream out(dir / kManifest);
    if (!out) throw Error("cannot write " + (dir / kManifest).string());
    out << manifest.dump(2) << '\n';
  }
  std::ofstream blob(dir / kBlob, std::ios::binary);
  if (!blob) throw Error("cannot write " + (dir / kBlob).string());
  for (const auto& t : params.tensors())
    for (Eigen::Index i = 0; i < t.value.rows(); ++i)
      for (Eigen::Index j = 0; j < t.value.cols(); ++j) write_le_double(blob, t.value(i, j));
}

void read_blob(const std::filesystem::path& dir, const json& manifest, ParameterSet& params) {
  const auto& tensors = manifest.at("tensors");
  if (tensors.size() != params.size()) throw Error("checkpoint tensor count does not match the model");
  std::ifstream blob(dir / manifest.value("blob", std::string(kBlob)), std::ios::binary);
  if (!blob) throw Error("cannot read checkpoint blob in " + dir.string());
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& t = tensors[k];
    if (t.at("name").get<std::string>() != params.name(k) || t.at("rows").get<Eigen::Index>() != params[k].rows() ||
        t.at("cols").get<Eigen::Index>() != params[k].cols())
      throw Error("checkpoint tensor '" + t.at("name").get<std::string>() + "' does not match the model layout");
    for (Eigen::Index i = 0; i < params[k].rows(); ++i)
      for (Eigen::Index j = 0; j < params[k].cols(); ++j) params[k](i, j) = read_le_double(blob);
  }
  if (blob.peek() != std::char_traits<char>::eof()) throw Error("checkpoint blob has trailing bytes");
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const ClassifierModel& model, const json& extra) {
  const auto& c = model.config();
  json m = {{"kind", "classifier"},
            {"config",
             {{"vocab_size", c.vocab_size},
              {"embedding_dim", c.embedding_dim},
              {"hidden", c.hidden},
              {"num_classes", c.num_classes},
              {"encoder", to_string(c.encoder)},
              {"pooling", to_string(c.pooling)},
              {"seed", c.seed}}}};
  if (!extra.is_null()) m["extra"] = extra;
  write_checkpoint(dir, model.parameters(), std::move(m));
}

void save_checkpoint(const std::filesystem::path& dir, const SpanModel& model, const json& extra) {
  const auto& c = model.config();
  json m = {{"kind", "span"},
            {"config",
             {{"vocab_size", c.vocab_size},
              {"embedding_dim", c.embedding_dim},
              {"hidden", c.hidden},
              {"max_span_length", c.max_span_length},
              {"seed", c.seed}}}};
  if (!extra.is_null()) m["extra"] = extra;
  write_checkpoint(dir, model.parameters(), std::move(m));
}

json read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / kManifest);
  if (!in) throw Error("cannot read " + (dir / kManifest).string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error("corrupt checkpoint manifest: " + std::string(e.what()));
  }
}

AnyModel load_checkpoint(const std::filesystem::path& dir) {
  const json manifest = read_manifest(dir);
  try {
    const auto& c = manifest.at("config");
    const std::string kind = manifest.at("kind");
    if (kind == "classifier") {
      ClassifierConfig cfg;
      cfg.vocab_size = c.at("vocab_size");
      cfg.embedding_dim = c.at("embedding_dim");
      cfg.hidden = c.at("hidden");
      cfg.num_classes = c.at("num_classes");
      cfg.encoder = parse_encoder(c.at("encoder").get<std::string>());
      cfg.pooling = parse_pooling(c.at("pooling").get<std::string>());
      cfg.seed = c.at("seed");
      ClassifierModel model(cfg);
      read_blob(dir, manifest, model.mutable_parameters());
      return model;
    }
    if (kind == "span") {
      SpanConfig cfg;
      cfg.vocab_size = c.at("vocab_size");
      cfg.embedding_dim = c.at("embedding_dim");
      cfg.hidden = c.at("hidden");
      cfg.max_span_length = c.at("max_span_length");
      cfg.seed = c.at("seed");
      SpanModel model(cfg);
      read_blob(dir, manifest, model.mutable_parameters());
      return model;
    }
    throw Error("unknown checkpoint kind '" + kind + "'");
  } catch (const json::exception& e) {
    throw Error("corrupt checkpoint manifest: " + std::string(e.what()));
  }
}

}  // namespace unlearn
