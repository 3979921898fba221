// Trains a small model on generated scenes and localises the target in a
// held-out one.

#include <iostream>

#include "dscg/eval.hpp"
#include "dscg/training.hpp"

int main() {
    using namespace dscg;
    const std::string data = DSCG_DATA_DIR;
    const KnowledgeBase kb = load_kb(data + "/mini_kb.tsv", data + "/mini_emb.txt");
    const LayoutSpec spec = load_layout_spec(data + "/layout.json");
    const auto scenes = generate_partial_dataset(spec, 40, 11, 0.4, 0.9);
    const std::vector<PartialScene> train_set(scenes.begin(), scenes.begin() + 30);
    const std::vector<PartialScene> test_set(scenes.begin() + 30, scenes.end());

    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.learning_rate = 1e-3;
    cfg.seed = 11;
    cfg.model.d_emb = kb.embedding_dim();
    cfg.model.hidden = 16;
    cfg.model.layers = 2;
    cfg.model.heads = 2;
    const TrainState st = train(train_set, {}, kb, cfg);
    std::cout << "final train loss " << st.log.epochs.back().loss << "\n";

    const PartialScene& s = test_set.front();
    const Prediction p = predict(s, kb, st.best);
    const auto [k, err] = closest_instance(p.position, s.target_instances);
    std::cout << s.scene_id << ": " << s.target_class << " predicted at (" << p.position[0] << ", " << p.position[1]
              << "), " << err << " m from the nearest instance\n";

    const EvalReport rep = evaluate(test_set, kb, st.best, default_thresholds(), uniform_edges(0.25));
    for (std::size_t i = 0; i < rep.thresholds.size(); ++i)
        std::cout << "LSR@" << rep.thresholds[i] << " " << rep.lsr[i] << " (centroid " << (*rep.baseline_lsr)[i] << ")\n";
}
