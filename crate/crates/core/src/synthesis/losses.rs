//! Adversarial objectives over logit maps.

use lesionkit_tensor::{Graph, Scalar, Tensor, Var};

use crate::error::{Error, Result};

/// `mean(-log σ(real)) + mean(-log(1 - σ(fake)))`; the fake logits should
/// come from a detached generator output.
pub fn discriminator_loss<T: Scalar>(g: &mut Graph<T>, real: Var, fake: Var) -> Result<Var> {
    if g.value(real).shape() != g.value(fake).shape() {
        return Err(Error::Dimension(format!(
            "discriminator logits differ in shape: {:?} vs {:?}",
            g.value(real).shape(),
            g.value(fake).shape()
        )));
    }
    let r = g.bce_with_logits(real, T::one());
    let f = g.bce_with_logits(fake, T::zero());
    Ok(g.add(r, f)?)
}

/// Non-saturating adversarial term plus weighted L1:
/// `λ_gan·mean(-log σ(fake)) + λ_l1·mean|generated - target|`.
pub fn generator_loss<T: Scalar>(
    g: &mut Graph<T>,
    fake: Var,
    generated: Var,
    target: &Tensor<T>,
    gan_weight: f64,
    l1_weight: f64,
) -> Result<Var> {
    let adv = g.bce_with_logits(fake, T::one());
    let adv = g.scale(adv, T::lit(gan_weight));
    let l1 = g.l1_loss(generated, target)?;
    let l1 = g.scale(l1, T::lit(l1_weight));
    Ok(g.add(adv, l1)?)
}
