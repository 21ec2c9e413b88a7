use crate::error::{AutodiffError, Result};
use crate::real::Real;
use crate::tensor::Tensor;
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Kernel,
    Bias,
    BnGamma,
    BnBeta,
    /// Batch-norm running mean; not trained.
    RunningMean,
    /// Batch-norm running variance; not trained.
    RunningVar,
}

impl Role {
    pub fn trainable(self) -> bool {
        !matches!(self, Role::RunningMean | Role::RunningVar)
    }

    pub fn code(self) -> u8 {
        match self {
            Role::Kernel => 0,
            Role::Bias => 1,
            Role::BnGamma => 2,
            Role::BnBeta => 3,
            Role::RunningMean => 4,
            Role::RunningVar => 5,
        }
    }

    pub fn from_code(code: u8) -> Option<Role> {
        Some(match code {
            0 => Role::Kernel,
            1 => Role::Bias,
            2 => Role::BnGamma,
            3 => Role::BnBeta,
            4 => Role::RunningMean,
            5 => Role::RunningVar,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub role: Role,
    pub value: Tensor<T>,
    pub grad: Option<Tensor<T>>,
}

/// Batch statistics observed by a training-mode batch norm, applied after the step.
#[derive(Debug, Clone)]
pub struct StatUpdate<T> {
    pub mean_id: ParamId,
    pub var_id: ParamId,
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

/// Named parameter storage. Ids are dense indices in insertion order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    by_name: HashMap<String, ParamId>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new(), by_name: HashMap::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, role: Role, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(AutodiffError::DuplicateName(name));
        }
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        self.params.push(Param { name, role, value, grad: None });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.by_name.get(name).copied().ok_or_else(|| AutodiffError::UnknownParam(name.to_string()))
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    /// Ids of trainable parameters whose name starts with `prefix`.
    pub fn trainable_with_prefix(&self, prefix: &str) -> Vec<ParamId> {
        self.iter()
            .filter(|(_, p)| p.role.trainable() && p.name.starts_with(prefix))
            .map(|(id, _)| id)
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().filter(|p| p.role.trainable()).map(|p| p.value.len()).sum()
    }

    /// Adds `grad` into the stored gradient of `id`.
    pub fn accumulate(&mut self, id: ParamId, grad: &Tensor<T>) -> Result<()> {
        let p = &mut self.params[id.0];
        if grad.shape() != p.value.shape() {
            return crate::error::shape_err("accumulate", format!("{} gradient {:?}", p.name, grad.shape()));
        }
        match &mut p.grad {
            Some(g) => g.data_mut().iter_mut().zip(grad.data()).for_each(|(a, &b)| *a += b),
            None => p.grad = Some(grad.clone()),
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        self.params.iter_mut().for_each(|p| p.grad = None);
    }

    /// `running = momentum * running + (1 - momentum) * batch`.
    pub fn apply_stat_updates(&mut self, updates: &[StatUpdate<T>], momentum: T) {
        let keep = momentum;
        let take = T::one() - momentum;
        for u in updates {
            for (id, batch) in [(u.mean_id, &u.mean), (u.var_id, &u.var)] {
                let run = self.params[id.0].value.data_mut();
                for (r, &b) in run.iter_mut().zip(batch) {
                    *r = keep * *r + take * b;
                }
            }
        }
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    role: p.role,
                    value: p.value.cast(),
                    grad: p.grad.as_ref().map(|g| g.cast()),
                })
                .collect(),
            by_name: self.by_name.clone(),
        }
    }
}
