#include "flowrecon/io.hpp"

#include "flowrecon/error.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace flowrecon {

std::string format_double(double value)
{
    if (std::isnan(value)) {
        return "nan";
    }
    if (std::isinf(value)) {
        return value > 0 ? "inf" : "-inf";
    }
    std::array<char, 64> buf{};
    const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    return std::string(buf.data(), end);
}

nlohmann::ordered_json to_json(const RadiusFunction& radius)
{
    nlohmann::ordered_json j;
    j["b0"] = radius.mean();
    j["a"] = radius.sine();
    j["b"] = radius.cosine();
    return j;
}

RadiusFunction radius_from_json(const nlohmann::json& j)
{
    try {
        return RadiusFunction(j.at("b0").get<double>(), j.value("a", std::vector<double>{}),
                              j.value("b", std::vector<double>{}));
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("malformed radius function: ") + e.what());
    }
}

nlohmann::ordered_json to_json(const GeometryBounds& bounds)
{
    nlohmann::ordered_json j;
    j["r0"] = bounds.r0;
    j["r1"] = bounds.r1;
    j["eta"] = bounds.eta;
    return j;
}

GeometryBounds bounds_from_json(const nlohmann::json& j)
{
    GeometryBounds b;
    try {
        b.r0 = j.value("r0", b.r0);
        b.r1 = j.value("r1", b.r1);
        b.eta = j.value("eta", b.eta);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("malformed geometry bounds: ") + e.what());
    }
    b.validate();
    return b;
}

nlohmann::json read_json_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoFailure("cannot open '" + path.string() + "'");
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw IoFailure(path.string() + ": invalid JSON: " + e.what());
    }
}

void write_text_file(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoFailure("cannot open '" + path.string() + "' for writing");
    }
    out << text;
    out.flush();
    if (!out) {
        throw IoFailure("write to '" + path.string() + "' failed");
    }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::ordered_json& j)
{
    write_text_file(path, j.dump(2) + "\n");
}

} // namespace flowrecon
