//! Trains a KROPE encoder on a Garnet dataset and prints its loss curve.

use krope::dataset::sample_dataset;
use krope::encoder::InputSpace;
use krope::experiments::diagnose::default_target;
use krope::mdp::{generate_garnet, GarnetParams, Policy};
use krope::training::{train_krope, TrainingConfig, TrainingData};

fn main() -> krope::Result<()> {
    let mdp = generate_garnet(GarnetParams::default(), 5)?;
    let pi = default_target(&mdp, 0.25)?;
    let data = sample_dataset(&mdp, &Policy::uniform(8, 5), 2000, 5)?;
    let config = TrainingConfig { latent_dim: 16, epochs: 200, seed: 5, ..Default::default() };
    let space = InputSpace::one_hot(&mdp, config.encoder_bias);
    let training = TrainingData::new(&mdp, &data, &pi, space, config.next_action, config.seed)?;
    let model = train_krope(&training, &config)?;
    for rec in model.trace.records.iter().step_by(25) {
        println!("epoch {:>3}  loss {:.5}  |W| {:.3}", rec.epoch, rec.loss, rec.param_norm);
    }
    println!("final status {}", model.trace.status().as_str());
    Ok(())
}
