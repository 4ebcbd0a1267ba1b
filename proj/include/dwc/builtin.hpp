#pragma once

#include <string_view>

// Config tables compiled into the library (generated from config/ at build time).
namespace dwc::builtin {

/// Reference sample text for a language profile: "en", "zh", "ja" or "id".
std::string_view langid_sample(std::string_view tag);
std::string_view emoji_ranges();
std::string_view zh_variants();
std::string_view tracking_keys();
/// "stopwords" or a risk category name.
std::string_view lexicon(std::string_view name);
std::string_view thresholds();
std::string_view taxonomy();

}  // namespace dwc::builtin
