#pragma once
// Visual attributes from external detectors (facial appearance, celebrity
// identity guesses) turned into prompt sentences. Detection itself is out of
// process; a fixture-backed provider replays recorded outputs.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace mel {

struct FaceAttributes {
  int object_index = 0;  // index into the sample's detected objects
  std::string gender;
  std::string race;
  int age = 0;
};

struct IdentityGuess {
  int object_index = 0;  // -1 = whole image
  std::string label;
  double score = 0.0;  // confidence in [0, 1]
};

// "{mention}, gender: {gender}, race: {race}, age: {age}"
std::string render_face_prompt(const std::string& mention, const FaceAttributes& attrs);

// Keeps guesses with score strictly greater than threshold, in input order.
std::vector<IdentityGuess> filter_identities(const std::vector<IdentityGuess>& guesses,
                                             double threshold = 0.5);

// "{mention} resembles: {label1}, {label2}, ..."; empty input renders "".
std::string render_identity_prompt(const std::string& mention,
                                   const std::vector<IdentityGuess>& kept);

struct ImageAttributes {
  std::vector<FaceAttributes> faces;
  std::vector<IdentityGuess> identities;
};

// Replays recorded detector outputs from a versioned JSONL fixture file,
// byte-identically across runs. Unknown image_refs yield empty attributes.
class FixtureAttributeProvider {
 public:
  explicit FixtureAttributeProvider(const std::filesystem::path& fixture_file);

  ImageAttributes fetch(const std::string& image_ref) const;
  std::size_t size() const { return by_image_.size(); }

 private:
  std::map<std::string, ImageAttributes> by_image_;
};

}  // namespace mel
