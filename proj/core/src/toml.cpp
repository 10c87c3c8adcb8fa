#include "semkd/toml.hpp"

#include <fstream>
#include <sstream>

#include <toml.hpp>

#include "semkd/errors.hpp"

namespace semkd::toml {

namespace {

using nlohmann::json;

json to_json(const ::toml::node& node, const std::string& where) {
  if (auto t = node.as_table()) {
    json out = json::object();
    for (const auto& [k, v] : *t) out[std::string(k.str())] = to_json(v, where);
    return out;
  }
  if (auto a = node.as_array()) {
    json out = json::array();
    for (const auto& v : *a) out.push_back(to_json(v, where));
    return out;
  }
  if (auto v = node.as_string()) return v->get();
  if (auto v = node.as_integer()) return v->get();
  if (auto v = node.as_floating_point()) return v->get();
  if (auto v = node.as_boolean()) return v->get();
  throw ParseError(where + ": dates and times are not supported");
}

void to_toml(const json& j, ::toml::table& out);

void append(const json& v, ::toml::array& out) {
  if (v.is_object()) {
    ::toml::table t;
    to_toml(v, t);
    out.push_back(std::move(t));
  } else if (v.is_array()) {
    ::toml::array a;
    for (const auto& e : v) append(e, a);
    out.push_back(std::move(a));
  } else if (v.is_boolean()) {
    out.push_back(v.get<bool>());
  } else if (v.is_number_integer()) {
    out.push_back(v.get<std::int64_t>());
  } else if (v.is_number()) {
    out.push_back(v.get<double>());
  } else if (v.is_string()) {
    out.push_back(v.get<std::string>());
  } else {
    throw ParseError("null values cannot be written as TOML");
  }
}

void to_toml(const json& j, ::toml::table& out) {
  for (const auto& [k, v] : j.items()) {
    if (v.is_object()) {
      ::toml::table t;
      to_toml(v, t);
      out.insert(k, std::move(t));
    } else if (v.is_array()) {
      ::toml::array a;
      for (const auto& e : v) append(e, a);
      out.insert(k, std::move(a));
    } else if (v.is_boolean()) {
      out.insert(k, v.get<bool>());
    } else if (v.is_number_integer()) {
      out.insert(k, v.get<std::int64_t>());
    } else if (v.is_number()) {
      out.insert(k, v.get<double>());
    } else if (v.is_string()) {
      out.insert(k, v.get<std::string>());
    } else {
      throw ParseError("null value for key '" + k + "' cannot be written as TOML");
    }
  }
}

}  // namespace

nlohmann::json parse(std::string_view text, const std::string& source_name) {
  try {
    const auto table = ::toml::parse(text, source_name);
    return to_json(table, source_name);
  } catch (const ::toml::parse_error& e) {
    const auto& src = e.source();
    throw ParseError(source_name + ":" + std::to_string(src.begin.line) + ":" +
                     std::to_string(src.begin.column) + ": " + std::string(e.description()));
  }
}

nlohmann::json parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LookupError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

nlohmann::json parse_value(std::string_view text) {
  try {
    const auto doc = ::toml::parse("v = " + std::string(text));
    return to_json(*doc.get("v"), "<override>");
  } catch (const ::toml::parse_error&) {
    return std::string(text);
  } catch (const ParseError&) {
    return std::string(text);
  }
}

std::string dump(const nlohmann::json& object) {
  if (!object.is_object()) throw ParseError("only tables can be written as TOML");
  ::toml::table t;
  to_toml(object, t);
  std::ostringstream out;
  out << ::toml::toml_formatter(t, ::toml::toml_formatter::default_flags &
                                       ~::toml::format_flags::indentation) << '\n';
  return out.str();
}

}  // namespace semkd::toml
