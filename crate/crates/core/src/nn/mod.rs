//! Small reverse-mode neural network engine in `f64`.

mod activation;
pub mod adam;
pub mod checkpoint;
mod conv;
pub mod convlstm;
pub mod gradcheck;
mod layers;
pub mod lstm;
mod model;
mod tensor;

pub use activation::{sigmoid, Activation};
pub use adam::{AdamState, DEFAULT_LEARNING_RATE};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use conv::Padding;
pub use convlstm::{convlstm_step, ConvLstmCellParams};
pub use gradcheck::{gradient_check, gradient_check_sampled, GradCheckReport, GradSample};
pub use layers::LayerSpec;
pub use lstm::{lstm_step, LstmCellParams};
pub use model::{mse, mse_grad, ModelGraph, ParamBlock};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid layer spec: {0}")]
    InvalidSpec(String),
    #[error("backward called before forward")]
    BackwardBeforeForward,
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_example() {
        let mut m = ModelGraph::new(vec![2], 0, vec![LayerSpec::dense(1, Activation::Linear)], 0).unwrap();
        m.set_params(&[2.0, 3.0, 1.0]).unwrap();
        let y = m.predict(&Tensor::vector(vec![1.0, 1.0]), None).unwrap();
        assert_eq!(y.data(), &[6.0]);
    }

    #[test]
    fn conv_example() {
        let mut m = ModelGraph::new(vec![1, 3, 3], 0, vec![LayerSpec::conv2d(1, Activation::Linear)], 0).unwrap();
        let mut p = vec![1.0; 9];
        p.push(0.0);
        m.set_params(&p).unwrap();
        let y = m.predict(&Tensor::new(vec![1, 3, 3], vec![1.0; 9]).unwrap(), None).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1]);
        assert_eq!(y.data(), &[9.0]);
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn backward_before_forward_errors() {
        let mut m = ModelGraph::new(vec![2], 0, vec![LayerSpec::dense(1, Activation::Linear)], 0).unwrap();
        assert!(matches!(m.backward(&[1.0]), Err(NnError::BackwardBeforeForward)));
    }

    #[test]
    fn shape_mismatch_is_diagnosed() {
        let m = ModelGraph::new(vec![3], 0, vec![LayerSpec::dense(2, Activation::Relu)], 0).unwrap();
        let err = m.predict(&Tensor::vector(vec![1.0; 4]), None).unwrap_err();
        assert!(err.to_string().contains("[3]"), "{err}");
        let err = ModelGraph::new(vec![2, 2], 0, vec![LayerSpec::dense(2, Activation::Relu)], 0).unwrap_err();
        assert!(err.to_string().contains("layer 0 (dense)"), "{err}");
    }

    #[test]
    fn invalid_specs_rejected() {
        for spec in [LayerSpec::Dropout { p: 1.0 }, LayerSpec::dense(0, Activation::Relu), LayerSpec::conv2d(0, Activation::Relu)] {
            assert!(spec.validate().is_err());
        }
    }

    #[test]
    fn lstm_forget_bias_starts_at_one() {
        let m = ModelGraph::new(vec![4, 2], 0, vec![LayerSpec::lstm(3, false)], 9).unwrap();
        let b = &m.params()[m.n_params() - 12..];
        assert_eq!(&b[3..6], &[1.0; 3]);
        assert_eq!(&b[..3], &[0.0; 3]);
    }
}
