#pragma once

#include "netdissect/activation_select.hpp"
#include "netdissect/corpus.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace netdissect {

struct NeuronDossier;

struct Waveform {
    std::vector<double> samples;  // in [-1, 1]
    double sample_rate = 0.0;     // Hz
};

/// RIFF/WAVE reader: 16-bit PCM or 32-bit float (including the extensible
/// header); multichannel files yield their first channel.
Waveform read_wav(const std::filesystem::path& path);
/// Writes mono 16-bit PCM.
void write_wav(const Waveform& w, const std::filesystem::path& path);

double mean_abs_amplitude(const Waveform& w);

/// Median frequency of the power spectrum of the whole clip (DC excluded):
/// the lowest bin frequency at which cumulative power reaches half the total.
double median_frequency(const Waveform& w);

enum class AudioStat { amplitude, mdf };

std::string to_string(AudioStat s);
AudioStat parse_audio_stat(const std::string& s);

double audio_stat(const Waveform& w, AudioStat s);

struct GroupStats {
    std::optional<double> with_word;  // empty when no neuron has the word
    std::optional<double> without_word;
    int n_with = 0;
    int n_without = 0;
};

/// Per neuron, the mean stat over its top-K clips.
struct NeuronAudioStats {
    std::string neuron_id;
    double mean_amp = 0.0;
    double mdf = 0.0;
};

/// Computes stats for every dossier's high-activation clips. Each waveform
/// is decoded once even when shared across neurons.
std::vector<NeuronAudioStats> neuron_audio_stats(const std::vector<NeuronDossier>& dossiers, const ProbeCorpus& corpus);

/// Splits neurons by whether their open set contains `word` and averages
/// the chosen stat within each group.
GroupStats group_stats_by_word(const std::vector<NeuronDossier>& dossiers, const std::vector<NeuronAudioStats>& stats,
                               const std::string& word, AudioStat stat);

void write_audio_stats_csv(const std::vector<NeuronAudioStats>& stats, const std::filesystem::path& path);

}  // namespace netdissect
