#include "smcgw/net/host.hpp"

#include <charconv>

#include <boost/asio/ip/address.hpp>

namespace smcgw::net {

std::string Address::to_string() const { return host + ":" + std::to_string(port); }

Address Address::parse(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0) {
    throw Error(Errc::ConfigError, "address must be host:port, got '" + std::string(text) + "'");
  }
  unsigned port = 0;
  const auto digits = text.substr(colon + 1);
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
  if (ec != std::errc() || ptr != digits.data() + digits.size() || port > 65535) {
    throw Error(Errc::ConfigError, "invalid port in '" + std::string(text) + "'");
  }
  return Address{std::string(text.substr(0, colon)), static_cast<std::uint16_t>(port)};
}

bool Address::is_loopback() const {
  if (host == "localhost") return true;
  boost::system::error_code ec;
  const auto addr = boost::asio::ip::make_address(host, ec);
  return !ec && addr.is_loopback();
}

bool Address::is_multicast() const {
  boost::system::error_code ec;
  const auto addr = boost::asio::ip::make_address(host, ec);
  return !ec && addr.is_multicast();
}

}  // namespace smcgw::net
