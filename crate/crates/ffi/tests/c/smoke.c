#include <stdio.h>
#include <string.h>

#include "zkzsl.h"

#define CHECK(call)                                                          \
    do {                                                                     \
        ZkzslStatus s_ = (call);                                             \
        if (s_ != ZKZSL_STATUS_OK) {                                         \
            fprintf(stderr, "%s failed (%d): %s\n", #call, (int)s_,          \
                    zkzsl_last_error());                                     \
            return 1;                                                        \
        }                                                                    \
    } while (0)

int main(int argc, char **argv) {
    if (argc != 2) {
        fprintf(stderr, "usage: smoke <model-path>\n");
        return 2;
    }
    ZkzslSynthSpec spec = zkzsl_synth_spec_default();
    spec.samples_per_class = 12;
    spec.feature_dim = 8;

    ZkzslDataset *ds = NULL;
    CHECK(zkzsl_dataset_synthesize(&spec, &ds));

    size_t hidden[] = {8};
    ZkzslTrainConfig cfg = zkzsl_train_config_default();
    cfg.h = 4;
    cfg.hidden = hidden;
    cfg.hidden_len = 1;
    cfg.pretrain_epochs = 3;
    cfg.train_epochs = 3;
    cfg.batch_size = 16;

    ZkzslModel *model = NULL;
    CHECK(zkzsl_model_train(ds, &cfg, &model));
    CHECK(zkzsl_model_save(model, argv[1]));

    ZkzslModel *loaded = NULL;
    CHECK(zkzsl_model_load(argv[1], &loaded));
    ZkzslMetrics m;
    CHECK(zkzsl_model_evaluate(loaded, ds, cfg.seed, &m));
    printf("acc_h %.4f sr_h %.4f\n", m.acc_h, m.sr_h);

    if (zkzsl_dataset_load("/nonexistent", &ds) != ZKZSL_STATUS_LOAD || strlen(zkzsl_last_error()) == 0) {
        fprintf(stderr, "expected a load error\n");
        return 1;
    }

    zkzsl_model_free(loaded);
    zkzsl_model_free(model);
    zkzsl_dataset_free(ds);
    printf("ok %s\n", zkzsl_version());
    return 0;
}
