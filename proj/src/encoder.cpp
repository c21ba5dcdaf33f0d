#include "recam/encoder.hpp"

#include <fstream>

#include "recam/errors.hpp"
#include "recam/ops.hpp"

namespace recam {

void EncoderConfig::validate() const {
    if (num_layers < 1 || num_heads < 1 || d_hidden < 1 || ffn_width < 1) {
        throw config_error("encoder config: layer/head/width values must be positive");
    }
    if (d_hidden % num_heads != 0) {
        throw config_error("encoder config: d_hidden " + std::to_string(d_hidden) +
                           " not divisible by " + std::to_string(num_heads) + " heads");
    }
    if (max_seq_len < 8) {
        throw config_error("encoder config: max_seq_len must be at least 8");
    }
    if (vocab_size < Vocabulary::reserved_count) {
        throw config_error("encoder config: vocab_size smaller than the reserved token block");
    }
}

EncoderParams EncoderParams::init(const EncoderConfig& cfg, RandomSource& rng, bool trainable) {
    cfg.validate();
    const auto v = static_cast<std::size_t>(cfg.vocab_size);
    const auto d = static_cast<std::size_t>(cfg.d_hidden);
    const auto l = static_cast<std::size_t>(cfg.max_seq_len);
    const auto ff = static_cast<std::size_t>(cfg.ffn_width);

    auto gauss = [&](const std::vector<std::size_t>& shape, double scl) {
        Tensor t = Tensor::zeros(shape, trainable);
        for (double& x : t.data()) x = rng.normal(0.0, scl);
        return t;
    };

    EncoderParams p;
    p.token_embedding = gauss({v, d}, 0.1);
    p.position_embedding = gauss({l, d}, 0.1);
    for (int layer = 0; layer < cfg.num_layers; ++layer) {
        EncoderLayerParams lp;
        lp.ln1_gain = Tensor::full({d}, 1.0, trainable);
        lp.ln1_bias = Tensor::zeros({d}, trainable);
        lp.attn = MultiHeadParams::init(cfg.d_hidden, cfg.num_heads, rng, 0.05, trainable);
        lp.ln2_gain = Tensor::full({d}, 1.0, trainable);
        lp.ln2_bias = Tensor::zeros({d}, trainable);
        lp.ff_w1 = gauss({d, ff}, 0.05);
        lp.ff_b1 = Tensor::zeros({ff}, trainable);
        lp.ff_w2 = gauss({ff, d}, 0.05);
        lp.ff_b2 = Tensor::zeros({d}, trainable);
        p.layers.push_back(std::move(lp));
    }
    p.final_gain = Tensor::full({d}, 1.0, trainable);
    p.final_bias = Tensor::zeros({d}, trainable);
    return p;
}

std::vector<std::pair<std::string, Tensor>> EncoderParams::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("encoder.token_embedding", token_embedding);
    out.emplace_back("encoder.position_embedding", position_embedding);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const std::string base = "encoder.layer" + std::to_string(l) + ".";
        const EncoderLayerParams& lp = layers[l];
        out.emplace_back(base + "ln1.gain", lp.ln1_gain);
        out.emplace_back(base + "ln1.bias", lp.ln1_bias);
        for (int h = 0; h < lp.attn.num_heads; ++h) {
            const std::string hb = base + "attn.head" + std::to_string(h) + ".";
            out.emplace_back(hb + "wq", lp.attn.w_q[static_cast<std::size_t>(h)]);
            out.emplace_back(hb + "wk", lp.attn.w_k[static_cast<std::size_t>(h)]);
            out.emplace_back(hb + "wv", lp.attn.w_v[static_cast<std::size_t>(h)]);
        }
        out.emplace_back(base + "attn.wo", lp.attn.w_o);
        out.emplace_back(base + "ln2.gain", lp.ln2_gain);
        out.emplace_back(base + "ln2.bias", lp.ln2_bias);
        out.emplace_back(base + "ffn.w1", lp.ff_w1);
        out.emplace_back(base + "ffn.b1", lp.ff_b1);
        out.emplace_back(base + "ffn.w2", lp.ff_w2);
        out.emplace_back(base + "ffn.b2", lp.ff_b2);
    }
    out.emplace_back("encoder.final.gain", final_gain);
    out.emplace_back("encoder.final.bias", final_bias);
    return out;
}

std::vector<Tensor> EncoderParams::parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
}

void EncoderParams::set_requires_grad(bool v) {
    for (auto& [name, t] : named_parameters()) {
        Tensor tt = t;
        tt.set_requires_grad(v);
    }
}

ChoiceSequences build_choice_sequences(const RecamInstance& inst, const Vocabulary& v,
                                       const EncoderConfig& cfg) {
    cfg.validate();
    if (count_placeholders(inst.question) != 1) {
        throw data_error("instance " + std::to_string(inst.id) +
                         ": question must contain exactly one @placeholder");
    }
    const std::size_t target_len = static_cast<std::size_t>(cfg.max_seq_len);
    const std::vector<int> article_ids = tokenize(inst.article, v);

    ChoiceSequences seqs;
    seqs.max_seq_len = target_len;
    for (std::size_t i = 0; i < 5; ++i) {
        const FilledText filled = fill_placeholder(inst.question, inst.options[i]);
        const std::vector<int> qo_ids = tokenize(filled.text, v);
        if (qo_ids.size() > target_len - 3) {
            throw data_error("instance " + std::to_string(inst.id) + ": question with option " +
                             std::to_string(i) + " needs " + std::to_string(qo_ids.size()) +
                             " tokens, budget is " + std::to_string(target_len - 3));
        }
        // Truncation removes trailing article tokens first.
        const std::size_t article_budget = target_len - 3 - qo_ids.size();
        const std::size_t article_len = std::min(article_budget, article_ids.size());

        auto& ids = seqs.token_ids[i];
        auto& seg = seqs.segments[i];
        auto& att = seqs.attention[i];
        ids.reserve(target_len);
        seg.reserve(target_len);
        att.reserve(target_len);

        ids.push_back(Vocabulary::cls_id);
        seg.push_back(Segment::QO);
        for (int id : qo_ids) {
            ids.push_back(id);
            seg.push_back(Segment::QO);
        }
        ids.push_back(Vocabulary::sep_id);
        seg.push_back(Segment::QO);
        for (std::size_t a = 0; a < article_len; ++a) {
            ids.push_back(article_ids[a]);
            seg.push_back(Segment::P);
        }
        // The trailing separator closes the passage; with no passage it
        // stays with the question block so E_P is genuinely empty.
        ids.push_back(Vocabulary::sep_id);
        seg.push_back(article_len > 0 ? Segment::P : Segment::QO);

        att.assign(ids.size(), 1);
        while (ids.size() < target_len) {
            ids.push_back(Vocabulary::pad_id);
            seg.push_back(Segment::Pad);
            att.push_back(0);
        }
    }
    return seqs;
}

Tensor encode_row(const std::vector<int>& ids, const std::vector<std::uint8_t>& valid,
                  const EncoderConfig& cfg, const EncoderParams& params) {
    if (ids.size() != valid.size()) {
        throw dimension_error("encode_row: ids/mask length mismatch");
    }
    if (ids.size() > static_cast<std::size_t>(cfg.max_seq_len)) {
        throw dimension_error("encode_row: sequence longer than max_seq_len");
    }
    std::vector<std::size_t> positions(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) positions[i] = i;

    Tensor x = add(embedding_lookup(params.token_embedding, ids),
                   gather_rows(params.position_embedding, positions));
    const AttentionMask mask{valid};
    for (const EncoderLayerParams& lp : params.layers) {
        Tensor h = layer_norm(x, lp.ln1_gain, lp.ln1_bias);
        x = add(x, multi_head_attention(lp.attn, h, h, h, mask));
        Tensor h2 = layer_norm(x, lp.ln2_gain, lp.ln2_bias);
        Tensor f = add_rowvec(
            matmul(gelu(add_rowvec(matmul(h2, lp.ff_w1), lp.ff_b1)), lp.ff_w2), lp.ff_b2);
        x = add(x, f);
    }
    return layer_norm(x, params.final_gain, params.final_bias);
}

EncodedChoices encode(const ChoiceSequences& seqs, const EncoderConfig& cfg,
                      const EncoderParams& params) {
    EncodedChoices out;
    out.seqs = seqs;
    out.rows.reserve(5);
    for (std::size_t i = 0; i < 5; ++i) {
        out.rows.push_back(encode_row(seqs.token_ids[i], seqs.attention[i], cfg, params));
    }
    return out;
}

Tensor mlm_pretrain_step(const std::vector<std::vector<int>>& batch_rows,
                         const EncoderConfig& cfg, const EncoderParams& params,
                         RandomSource& rng, MlmStats* stats) {
    if (batch_rows.empty()) {
        throw degenerate_input_error("mlm_pretrain_step: empty batch");
    }
    struct MaskedPos {
        std::size_t row;
        std::size_t pos;
        int original;
    };
    std::vector<MaskedPos> eligible, picked;
    for (std::size_t r = 0; r < batch_rows.size(); ++r) {
        for (std::size_t p = 0; p < batch_rows[r].size(); ++p) {
            const int id = batch_rows[r][p];
            if (!Vocabulary::is_reserved(id)) {
                eligible.push_back({r, p, id});
            }
        }
    }
    if (eligible.empty()) {
        throw degenerate_input_error("mlm_pretrain_step: batch has no maskable positions");
    }
    for (const MaskedPos& e : eligible) {
        if (rng.uniform() < 0.15) picked.push_back(e);
    }
    if (picked.empty()) {
        picked.push_back(eligible[rng.uniform_int(eligible.size())]);
    }
    if (stats) {
        stats->eligible = eligible.size();
        stats->masked = picked.size();
    }

    // Masked copies of the rows.
    std::vector<std::vector<int>> masked = batch_rows;
    for (const MaskedPos& m : picked) {
        masked[m.row][m.pos] = Vocabulary::mask_id;
    }

    Tensor emb_t = transpose(params.token_embedding); // tied output layer
    std::vector<Tensor> losses;
    for (std::size_t r = 0; r < batch_rows.size(); ++r) {
        std::vector<std::size_t> mask_positions;
        std::vector<int> labels;
        for (const MaskedPos& m : picked) {
            if (m.row == r) {
                mask_positions.push_back(m.pos);
                labels.push_back(m.original);
            }
        }
        if (mask_positions.empty()) continue;
        std::vector<std::uint8_t> valid(masked[r].size(), 1);
        for (std::size_t p = 0; p < masked[r].size(); ++p) {
            valid[p] = masked[r][p] == Vocabulary::pad_id ? 0 : 1;
        }
        Tensor encoded = encode_row(masked[r], valid, cfg, params);
        Tensor h = gather_rows(encoded, mask_positions);
        Tensor logits = matmul(h, emb_t);
        // Per-position mean within the row, reweighted to a global mean below.
        losses.push_back(scale(cross_entropy_rows(logits, labels),
                               static_cast<double>(labels.size())));
    }
    Tensor total = losses.front();
    for (std::size_t i = 1; i < losses.size(); ++i) total = add(total, losses[i]);
    return scale(total, 1.0 / static_cast<double>(picked.size()));
}

std::vector<std::vector<int>> make_mlm_rows(const std::string& corpus_path, const Vocabulary& v,
                                            const EncoderConfig& cfg) {
    std::ifstream in(corpus_path);
    if (!in) {
        throw data_error("make_mlm_rows: cannot read " + corpus_path);
    }
    const std::size_t body = static_cast<std::size_t>(cfg.max_seq_len) - 2;
    std::vector<std::vector<int>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<int> ids = tokenize(line, v);
        for (std::size_t start = 0; start < ids.size(); start += body) {
            const std::size_t len = std::min(body, ids.size() - start);
            std::vector<int> row;
            row.reserve(len + 2);
            row.push_back(Vocabulary::cls_id);
            row.insert(row.end(), ids.begin() + static_cast<long>(start),
                       ids.begin() + static_cast<long>(start + len));
            row.push_back(Vocabulary::sep_id);
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

} // namespace recam
