use dist_core::augment::AugmentParams;
use dist_core::clipset::{generate_synthetic_dataset, split_labeled_unlabeled, GeneratorParams, Split};
use dist_core::model::ModelSpec;
use dist_core::sampling::SamplingParams;
use dist_core::trainer::{checkpoint_epochs, lr_at_epoch, train, TrainExample, TrainOptions, TrainSchedule};

#[test]
fn loss_falls_and_checkpoints_follow_the_schedule() {
    let set = generate_synthetic_dataset(&GeneratorParams {
        num_clips: 96,
        num_classes: 4,
        frames_per_clip: 16,
        frame_size: 32,
        difficulty: 0.3,
        seed: 5,
    })
    .unwrap();
    let data = split_labeled_unlabeled(&set, 1.0, 0.1, 0).unwrap();
    let examples: Vec<TrainExample<'_>> = data
        .in_split(Split::Labeled)
        .map(|c| TrainExample {
            id: c.id(),
            frames: c.frames(),
            label: c.label().unwrap(),
        })
        .collect();
    let schedule = TrainSchedule {
        epochs: 6,
        ..TrainSchedule::default()
    };
    let sampling = SamplingParams::default();
    let out = train(
        &ModelSpec::reference(4, (8, 32, 32), 1),
        &examples,
        &TrainOptions {
            schedule: &schedule,
            sampling: &sampling,
            augment: &AugmentParams::default(),
            seed: 2,
            save_checkpoints: true,
            warm_start: None,
        },
    )
    .unwrap();

    assert_eq!(out.epoch_losses.len(), 6);
    let (first, last) = (out.epoch_losses[0], out.epoch_losses[5]);
    assert!(last < first, "loss {first} -> {last}");
    // applied as f32
    for (e, lr) in out.learning_rates.iter().enumerate() {
        let want = lr_at_epoch(&schedule, e).unwrap();
        assert!((lr - want).abs() <= 1e-7 * want, "epoch {e}: {lr} vs {want}");
    }
    let ck = out.checkpoints.expect("checkpoints requested");
    assert_eq!(ck.epochs(), checkpoint_epochs(6).unwrap());
    assert_eq!(ck.final_model().params(), out.model.params());
}
