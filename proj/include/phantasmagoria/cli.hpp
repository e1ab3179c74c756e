#pragma once

#include <optional>
#include <string>
#include <vector>

namespace phantasmagoria {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

/// Named fine-tuning recipe. Unset fields leave the flag defaults alone.
struct FinetunePreset {
  std::string name;
  std::string summary;
  std::string type;     // lvi, covi, crvi
  std::string shape;    // square, ring, bar, grating
  std::string vts;      // restorenet, odog
  std::string dataset;  // textures, natural
  std::string sign;     // right, left
  std::vector<double> target_value;
  std::vector<double> channel_weights;
  double orientation_deg = 0.0;
};

const std::vector<FinetunePreset>& finetune_presets();
std::optional<FinetunePreset> find_preset(const std::string& name);

/// Entry point of the command-line tool; args excludes the program name.
int run_cli(const std::vector<std::string>& args);
int run_cli(int argc, char** argv);

}  // namespace phantasmagoria
