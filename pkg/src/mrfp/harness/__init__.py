from .backbone import (PENULTIMATE_HOOK, STAGE0_HOOK, BackboneSpec, SegBackbone,
                       add_instance_norms, count_trainable)
from .data import (DomainSpec, Sample, SegDataset, fog_domain, generate_dataset, load_dataset,
                   make_dataset, rain_domain, save_dataset, source_domain, texture_shift_domain)
from .train import (TrainConfig, TrainingDiverged, TrainResult, evaluate, final_stage_features,
                    poly_lr, segmentation_loss, train)
