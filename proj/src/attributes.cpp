#include "melkit/attributes.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace mel {

using nlohmann::json;

std::string render_face_prompt(const std::string& mention, const FaceAttributes& attrs) {
  return mention + ", gender: " + attrs.gender + ", race: " + attrs.race +
         ", age: " + std::to_string(attrs.age);
}

std::vector<IdentityGuess> filter_identities(const std::vector<IdentityGuess>& guesses,
                                             double threshold) {
  if (threshold < 0.0 || threshold > 1.0)
    throw std::invalid_argument("filter_identities: threshold must be in [0, 1]");
  std::vector<IdentityGuess> kept;
  for (const auto& g : guesses)
    if (g.score > threshold) kept.push_back(g);
  return kept;
}

std::string render_identity_prompt(const std::string& mention,
                                   const std::vector<IdentityGuess>& kept) {
  if (kept.empty()) return "";
  std::string out = mention + " resembles: ";
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (i > 0) out += ", ";
    out += kept[i].label;
  }
  return out;
}

FixtureAttributeProvider::FixtureAttributeProvider(const std::filesystem::path& fixture_file) {
  std::ifstream in(fixture_file);
  if (!in) throw std::runtime_error("cannot open attribute fixture " + fixture_file.string());
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw std::runtime_error(fixture_file.string() + ":" + std::to_string(lineno) +
                               ": not a JSON object");
    if (j.contains("attr_fixture_version")) {
      const int version = j["attr_fixture_version"].get<int>();
      if (version != 1)
        throw std::runtime_error(fixture_file.string() + ": unsupported fixture version " +
                                 std::to_string(version));
      header_seen = true;
      continue;
    }
    if (!header_seen)
      throw std::runtime_error(fixture_file.string() + ": missing attr_fixture_version header line");
    ImageAttributes attrs;
    for (const auto& f : j.value("faces", json::array())) {
      FaceAttributes fa;
      fa.object_index = f.at("object_index").get<int>();
      fa.gender = f.at("gender").get<std::string>();
      fa.race = f.at("race").get<std::string>();
      fa.age = f.at("age").get<int>();
      if (fa.object_index < 0 || fa.age < 0)
        throw std::runtime_error(fixture_file.string() + ":" + std::to_string(lineno) +
                                 ": invalid face attributes");
      attrs.faces.push_back(std::move(fa));
    }
    for (const auto& s : j.value("identities", json::array())) {
      IdentityGuess ig;
      ig.object_index = s.at("object_index").get<int>();
      ig.label = s.at("label").get<std::string>();
      ig.score = s.at("score").get<double>();
      if (ig.score < 0.0 || ig.score > 1.0 || ig.object_index < -1)
        throw std::runtime_error(fixture_file.string() + ":" + std::to_string(lineno) +
                                 ": invalid identity guess");
      attrs.identities.push_back(std::move(ig));
    }
    const std::string image_ref = j.at("image_ref").get<std::string>();
    if (!by_image_.emplace(image_ref, std::move(attrs)).second)
      throw std::runtime_error(fixture_file.string() + ":" + std::to_string(lineno) +
                               ": duplicate image_ref '" + image_ref + "'");
  }
}

ImageAttributes FixtureAttributeProvider::fetch(const std::string& image_ref) const {
  auto it = by_image_.find(image_ref);
  return it == by_image_.end() ? ImageAttributes{} : it->second;
}

}  // namespace mel
