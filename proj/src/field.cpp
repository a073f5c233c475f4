#include "smcgw/field.hpp"

#include <charconv>

namespace smcgw {

nlohmann::json share_to_json(const Share& share) {
  return {{"index", share.index}, {"value", std::to_string(share.value.value())}};
}

Share share_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("index") || !j.contains("value") ||
      !j["index"].is_number_unsigned() || !j["value"].is_string()) {
    throw Error(Errc::MalformedMessage, "share must be {index, value}");
  }
  const auto& text = j["value"].get_ref<const std::string&>();
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || v >= FieldElement::kModulus) {
    throw Error(Errc::MalformedMessage, "share value is not a canonical field element");
  }
  Share s{j["index"].get<std::uint64_t>(), FieldElement(v)};
  if (s.index == 0) throw Error(Errc::InvalidShareIndex, "share index 0 is reserved");
  return s;
}

}  // namespace smcgw
