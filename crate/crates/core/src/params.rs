//! Named parameter storage shared by models, optimizers and file formats.

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

#[derive(Clone, Debug)]
pub struct Param {
    pub value: Tensor,
    pub grad: Option<Tensor>,
    pub trainable: bool,
}

/// Insertion-ordered map of named tensors. Iteration order is the order the
/// model created its parameters, which keeps files and reports stable.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: IndexMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) {
        self.params.insert(
            name.into(),
            Param {
                value,
                grad: None,
                trainable,
            },
        );
    }

    pub fn remove(&mut self, name: &str) -> Option<Param> {
        self.params.shift_remove(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Param> {
        self.params
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Param> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter `{name}`")))
    }

    pub fn value(&self, name: &str) -> Result<&Tensor> {
        Ok(&self.get(name)?.value)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn trainable_names(&self) -> Vec<String> {
        self.params
            .iter()
            .filter(|(_, p)| p.trainable)
            .map(|(k, _)| k.clone())
            .collect()
    }

    pub fn set_all_trainable(&mut self, trainable: bool) {
        for p in self.params.values_mut() {
            p.trainable = trainable;
        }
    }

    /// Total number of scalar values.
    pub fn num_values(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    /// Puts parameter `name` on the graph as a leaf; it requires grad iff trainable.
    pub fn bind(&self, g: &mut Graph, name: &str) -> Result<Var> {
        let p = self.get(name)?;
        Ok(g.leaf(p.value.clone(), p.trainable))
    }

    /// Adds the graph gradients of bound leaves onto the stored gradients.
    pub fn accumulate_grads(&mut self, g: &Graph, leaves: &[(String, Var)]) -> Result<()> {
        for (name, var) in leaves {
            let Some(grad) = g.grad(*var) else { continue };
            let p = self.get_mut(name)?;
            match &mut p.grad {
                Some(existing) => existing.add_assign(grad),
                None => p.grad = Some(grad.clone()),
            }
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad = None;
        }
    }

    /// Copies the values of `names` (for best-epoch snapshots).
    pub fn snapshot(&self, names: &[String]) -> Result<Vec<(String, Tensor)>> {
        names.iter().map(|n| Ok((n.clone(), self.value(n)?.clone()))).collect()
    }

    pub fn restore(&mut self, snapshot: &[(String, Tensor)]) -> Result<()> {
        for (name, value) in snapshot {
            self.get_mut(name)?.value = value.clone();
        }
        Ok(())
    }
}
