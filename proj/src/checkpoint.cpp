#include "fairpen/nn.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace fairpen {

namespace {

std::string hex_double(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}

void write_values(std::ostream& out, const double* data, Eigen::Index count)
{
    for (Eigen::Index i = 0; i < count; ++i) {
        out << (i == 0 ? "" : " ") << hex_double(data[i]);
    }
    out << '\n';
}

class Reader {
public:
    Reader(std::istream& in, std::string source)
        : in_(in)
        , source_(std::move(source))
    {
    }

    std::string word()
    {
        std::string w;
        if (!(in_ >> w)) {
            fail("unexpected end of file");
        }
        return w;
    }

    void expect(const std::string& token)
    {
        const std::string w = word();
        if (w != token) {
            fail("expected '" + token + "', found '" + w + "'");
        }
    }

    std::size_t count()
    {
        const std::string w = word();
        char* end = nullptr;
        const unsigned long long v = std::strtoull(w.c_str(), &end, 10);
        if (end == w.c_str() || *end != '\0') {
            fail("expected a count, found '" + w + "'");
        }
        return static_cast<std::size_t>(v);
    }

    double real()
    {
        const std::string w = word();
        char* end = nullptr;
        const double v = std::strtod(w.c_str(), &end);
        if (end == w.c_str() || *end != '\0') {
            fail("expected a number, found '" + w + "'");
        }
        return v;
    }

    void fill(double* data, Eigen::Index count)
    {
        for (Eigen::Index i = 0; i < count; ++i) {
            data[i] = real();
        }
    }

    [[noreturn]] void fail(const std::string& what) const
    {
        throw CheckpointError("checkpoint " + source_ + ": " + what);
    }

private:
    std::istream& in_;
    std::string source_;
};

} // namespace

void save_checkpoint(const Mlp& net, std::ostream& out)
{
    out << kCheckpointMagic << '\n';
    out << "layers " << net.layers().size() << '\n';
    for (const auto& layer : net.layers()) {
        std::visit(
            [&](const auto& l) {
                using T = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<T, DenseLayer>) {
                    out << "dense " << l.input_width() << ' ' << l.output_width() << '\n';
                    write_values(out, l.weights.data(), l.weights.size());
                    write_values(out, l.bias.data(), l.bias.size());
                } else if constexpr (std::is_same_v<T, BatchNormLayer>) {
                    out << "batchnorm " << l.width() << ' ' << hex_double(l.momentum) << ' ' << hex_double(l.epsilon) << '\n';
                    write_values(out, l.gamma.data(), l.gamma.size());
                    write_values(out, l.beta_shift.data(), l.beta_shift.size());
                    write_values(out, l.running_mean.data(), l.running_mean.size());
                    write_values(out, l.running_var.data(), l.running_var.size());
                } else {
                    out << "activation " << to_string(l.kind) << '\n';
                }
            },
            layer);
    }
    out << "end\n";
}

Mlp load_checkpoint(std::istream& in, const std::string& source_name)
{
    Reader reader(in, source_name);
    std::string magic;
    if (!std::getline(in, magic) || magic != kCheckpointMagic) {
        reader.fail("bad magic header (expected " + std::string(kCheckpointMagic) + ")");
    }
    reader.expect("layers");
    const std::size_t n_layers = reader.count();
    std::vector<Layer> layers;
    layers.reserve(n_layers);
    for (std::size_t i = 0; i < n_layers; ++i) {
        const std::string kind = reader.word();
        if (kind == "dense") {
            const std::size_t in_w = reader.count();
            const std::size_t out_w = reader.count();
            DenseLayer layer(in_w, out_w);
            reader.fill(layer.weights.data(), layer.weights.size());
            reader.fill(layer.bias.data(), layer.bias.size());
            layers.emplace_back(std::move(layer));
        } else if (kind == "batchnorm") {
            BatchNormLayer layer(reader.count());
            layer.momentum = reader.real();
            layer.epsilon = reader.real();
            reader.fill(layer.gamma.data(), layer.gamma.size());
            reader.fill(layer.beta_shift.data(), layer.beta_shift.size());
            reader.fill(layer.running_mean.data(), layer.running_mean.size());
            reader.fill(layer.running_var.data(), layer.running_var.size());
            layers.emplace_back(std::move(layer));
        } else if (kind == "activation") {
            const std::string name = reader.word();
            try {
                layers.emplace_back(ActivationLayer {activation_from_string(name), {}, {}});
            } catch (const std::invalid_argument& e) {
                reader.fail(e.what());
            }
        } else {
            reader.fail("unknown layer kind '" + kind + "'");
        }
    }
    reader.expect("end");
    try {
        return Mlp(std::move(layers));
    } catch (const DimensionError& e) {
        reader.fail(e.what());
    }
}

void save_checkpoint(const Mlp& net, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw CheckpointError("cannot open " + path.string() + " for writing");
    }
    save_checkpoint(net, out);
    if (!out) {
        throw CheckpointError("write failed for " + path.string());
    }
}

Mlp load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CheckpointError("cannot open checkpoint " + path.string());
    }
    return load_checkpoint(in, path.string());
}

} // namespace fairpen
