#include "netdissect/audiostats.hpp"

#include "netdissect/dossier.hpp"
#include "netdissect/error.hpp"
#include "netdissect/parallel.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>

namespace netdissect {

namespace fs = std::filesystem;

namespace {

std::uint16_t u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }
std::uint32_t u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put16(std::ostream& out, std::uint16_t v) {
    const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
    out.write(b, 2);
}
void put32(std::ostream& out, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff), static_cast<char>((v >> 16) & 0xff),
                       static_cast<char>(v >> 24)};
    out.write(b, 4);
}

// FFTW planning is not thread-safe; execution is.
std::mutex& plan_mutex() {
    static std::mutex m;
    return m;
}

}  // namespace

Waveform read_wav(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open waveform " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto bad = [&](const std::string& why) { return format_error(path.string() + ": " + why); };
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw bad("not a RIFF/WAVE file");

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    const unsigned char* data = nullptr;
    std::size_t data_len = 0;
    for (std::size_t pos = 12; pos + 8 <= bytes.size();) {
        const unsigned char* h = bytes.data() + pos;
        const std::size_t len = u32(h + 4);
        const std::size_t body = pos + 8;
        const std::size_t avail = std::min(len, bytes.size() - body);
        if (std::memcmp(h, "fmt ", 4) == 0) {
            if (avail < 16) throw bad("short fmt chunk");
            const unsigned char* f = bytes.data() + body;
            format = u16(f);
            channels = u16(f + 2);
            rate = u32(f + 4);
            bits = u16(f + 14);
            if (format == 0xFFFE) {
                if (avail < 26) throw bad("short extensible fmt chunk");
                format = u16(f + 24);  // first two bytes of the subformat GUID
            }
        } else if (std::memcmp(h, "data", 4) == 0) {
            data = bytes.data() + body;
            data_len = avail;
        }
        pos = body + len + (len & 1);
    }
    if (channels == 0 || rate == 0) throw bad("missing fmt chunk");
    if (!data) throw bad("missing data chunk");

    Waveform w;
    w.sample_rate = rate;
    if (format == 1 && bits == 16) {
        const std::size_t frame = 2u * channels;
        for (std::size_t i = 0; i + frame <= data_len; i += frame)
            w.samples.push_back(static_cast<std::int16_t>(u16(data + i)) / 32768.0);
    } else if (format == 3 && bits == 32) {
        const std::size_t frame = 4u * channels;
        for (std::size_t i = 0; i + frame <= data_len; i += frame) {
            const std::uint32_t raw = u32(data + i);
            float f;
            std::memcpy(&f, &raw, 4);
            w.samples.push_back(f);
        }
    } else {
        throw bad("unsupported sample format " + std::to_string(format) + " at " + std::to_string(bits) + " bits");
    }
    if (w.samples.empty()) throw bad("no samples");
    return w;
}

void write_wav(const Waveform& w, const fs::path& path) {
    if (!(w.sample_rate > 0)) throw invalid_argument("sample rate must be positive");
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write " + path.string());
    const auto n = static_cast<std::uint32_t>(w.samples.size());
    const auto rate = static_cast<std::uint32_t>(std::lround(w.sample_rate));
    out.write("RIFF", 4);
    put32(out, 36 + 2 * n);
    out.write("WAVEfmt ", 8);
    put32(out, 16);
    put16(out, 1);
    put16(out, 1);
    put32(out, rate);
    put32(out, rate * 2);
    put16(out, 2);
    put16(out, 16);
    out.write("data", 4);
    put32(out, 2 * n);
    for (double s : w.samples) {
        const double c = std::clamp(s, -1.0, 1.0);
        put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32767.0))));
    }
}

double mean_abs_amplitude(const Waveform& w) {
    if (w.samples.empty()) throw invalid_argument("empty waveform");
    double sum = 0.0;
    for (double s : w.samples) sum += std::abs(s);
    return sum / static_cast<double>(w.samples.size());
}

double median_frequency(const Waveform& w) {
    const std::size_t n = w.samples.size();
    if (n < 2) throw invalid_argument("median frequency needs at least 2 samples");
    if (!(w.sample_rate > 0)) throw invalid_argument("sample rate must be positive");

    const std::size_t bins = n / 2 + 1;
    std::vector<double> input(w.samples);
    auto* spectrum = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * bins));
    fftw_plan plan;
    {
        std::lock_guard lock(plan_mutex());
        plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), input.data(), spectrum, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    std::vector<double> power(bins, 0.0);
    for (std::size_t k = 1; k < bins; ++k) power[k] = spectrum[k][0] * spectrum[k][0] + spectrum[k][1] * spectrum[k][1];
    {
        std::lock_guard lock(plan_mutex());
        fftw_destroy_plan(plan);
    }
    fftw_free(spectrum);

    double total = 0.0;
    for (double p : power) total += p;
    if (!(total > 0.0)) throw invalid_argument("median frequency is undefined for a silent signal");
    // Tolerate rounding so an exact half-power boundary lands on its own bin.
    const double half = 0.5 * total * (1.0 - 1e-12);
    double cum = 0.0;
    for (std::size_t k = 1; k < bins; ++k) {
        cum += power[k];
        if (cum >= half) return static_cast<double>(k) * w.sample_rate / static_cast<double>(n);
    }
    return static_cast<double>(bins - 1) * w.sample_rate / static_cast<double>(n);
}

std::string to_string(AudioStat s) { return s == AudioStat::amplitude ? "amplitude" : "mdf"; }

AudioStat parse_audio_stat(const std::string& s) {
    if (s == "amplitude") return AudioStat::amplitude;
    if (s == "mdf") return AudioStat::mdf;
    throw invalid_argument("unknown stat '" + s + "'");
}

double audio_stat(const Waveform& w, AudioStat s) {
    return s == AudioStat::amplitude ? mean_abs_amplitude(w) : median_frequency(w);
}

std::vector<NeuronAudioStats> neuron_audio_stats(const std::vector<NeuronDossier>& dossiers, const ProbeCorpus& corpus) {
    std::map<std::size_t, std::size_t> slot;  // clip index -> position in `needed`
    std::vector<std::size_t> needed;
    for (const auto& d : dossiers)
        for (const auto& id : d.high_clip_ids) {
            const auto idx = corpus.index_of(id);
            if (slot.emplace(idx, needed.size()).second) needed.push_back(idx);
        }

    std::vector<std::pair<double, double>> per_clip(needed.size());
    parallel_for(needed.size(), [&](std::size_t i) {
        const auto& clip = corpus.clip(needed[i]);
        if (!clip.waveform_path) throw io_error("clip '" + clip.id + "' has no waveform_path");
        const Waveform w = read_wav(*clip.waveform_path);
        per_clip[i] = {mean_abs_amplitude(w), median_frequency(w)};
    });

    std::vector<NeuronAudioStats> out;
    for (const auto& d : dossiers) {
        NeuronAudioStats s{d.neuron_id, 0.0, 0.0};
        if (d.high_clip_ids.empty()) throw invalid_argument("neuron " + d.neuron_id + " has no top-K clips");
        for (const auto& id : d.high_clip_ids) {
            const auto& [amp, mdf] = per_clip[slot.at(corpus.index_of(id))];
            s.mean_amp += amp;
            s.mdf += mdf;
        }
        const auto k = static_cast<double>(d.high_clip_ids.size());
        s.mean_amp /= k;
        s.mdf /= k;
        out.push_back(std::move(s));
    }
    return out;
}

GroupStats group_stats_by_word(const std::vector<NeuronDossier>& dossiers, const std::vector<NeuronAudioStats>& stats,
                               const std::string& word, AudioStat stat) {
    if (dossiers.size() != stats.size()) throw invalid_argument("dossier and stats counts differ");
    GroupStats g;
    double with = 0.0, without = 0.0;
    for (std::size_t i = 0; i < dossiers.size(); ++i) {
        const double v = stat == AudioStat::amplitude ? stats[i].mean_amp : stats[i].mdf;
        if (dossiers[i].all_open_words().contains(word)) {
            with += v;
            ++g.n_with;
        } else {
            without += v;
            ++g.n_without;
        }
    }
    if (g.n_with) g.with_word = with / g.n_with;
    if (g.n_without) g.without_word = without / g.n_without;
    return g;
}

void write_audio_stats_csv(const std::vector<NeuronAudioStats>& stats, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw io_error("cannot write " + path.string());
    out << "neuron_id,mean_amp,mdf\n" << std::setprecision(17);
    for (const auto& s : stats) out << s.neuron_id << ',' << s.mean_amp << ',' << s.mdf << '\n';
}

}  // namespace netdissect
