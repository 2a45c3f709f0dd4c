//! Round-based federated training.
//!
//! One round, for every participating client:
//!
//! 1. receive the global classifier and install it as the local head;
//! 2. fine-tune extractor, representation map and head on local data;
//! 3. map every local representation and build the strategy's upload.
//!
//! Then the server fits the global classifier on all uploads and the
//! communication ledger records the scalar counts. Clients run in parallel
//! (each owns its state and RNG stream); the server waits for all of them.
//! A round either commits for every participant or leaves all state as it
//! was.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{self, ClientStats, Strategy};
use crate::data::Dataset;
use crate::entangle::{
    entangle_mapped, prototypes_of_mapped, re_weights, EntangledPacket, ReMechanism,
    RepresentationMap, RepresentationSet, WeightVector,
};
use crate::exec::{self, Execution};
use crate::nn::{
    argmax, soft_cross_entropy, soft_cross_entropy_grad, DenseNet, GradientSet, LabelEncoding,
};
use crate::rng::{stream, Domain, SimRng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalHyper {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    pub extractor: DenseNet,
    pub rm: RepresentationMap,
    pub classifier: DenseNet,
    pub train: Dataset,
    pub test: Dataset,
    pub rng: SimRng,
    pub hyper: LocalHyper,
    /// Weight vector reused every round under fixed sampling.
    pub(crate) fixed_weights: Option<WeightVector>,
    /// Global prototypes pulled in by the prototype-regularized strategy.
    pub(crate) global_prototypes: Vec<(usize, Vec<f64>)>,
    pub(crate) proto_lambda: f64,
}

/// Gradients for every trainable part of a client model.
#[derive(Debug, Clone)]
struct ModelGrads {
    extractor: GradientSet,
    fc: Option<GradientSet>,
    classifier: GradientSet,
}

impl ModelGrads {
    fn add_assign(&mut self, other: &ModelGrads) -> Result<()> {
        self.extractor.add_assign(&other.extractor)?;
        self.classifier.add_assign(&other.classifier)?;
        match (&mut self.fc, &other.fc) {
            (Some(a), Some(b)) => a.add_assign(b),
            (None, None) => Ok(()),
            _ => Err(Error::shape("FC gradient presence differs")),
        }
    }

    fn scale(&mut self, f: f64) {
        self.extractor.scale(f);
        self.classifier.scale(f);
        if let Some(g) = &mut self.fc {
            g.scale(f);
        }
    }
}

impl ClientState {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: usize,
        extractor: DenseNet,
        rm: RepresentationMap,
        classifier: DenseNet,
        train: Dataset,
        test: Dataset,
        rng: SimRng,
        hyper: LocalHyper,
    ) -> Result<Self> {
        let d = classifier.input_dim();
        rm.validate(extractor.output_dim(), d)?;
        if extractor.input_dim() != train.dim() || train.dim() != test.dim() {
            return Err(Error::shape(format!(
                "client {id}: extractor takes {} features, data has {}",
                extractor.input_dim(),
                train.dim()
            )));
        }
        if classifier.output_dim() != train.num_classes() {
            return Err(Error::shape(format!(
                "client {id}: classifier emits {} logits for {} categories",
                classifier.output_dim(),
                train.num_classes()
            )));
        }
        if !(hyper.lr.is_finite() && hyper.lr >= 0.0) || hyper.batch_size == 0 {
            return Err(Error::invalid(format!(
                "client {id}: lr must be >= 0 and batch size positive"
            )));
        }
        Ok(Self {
            id,
            extractor,
            rm,
            classifier,
            train,
            test,
            rng,
            hyper,
            fixed_weights: None,
            global_prototypes: Vec::new(),
            proto_lambda: 0.0,
        })
    }

    pub fn unified_dim(&self) -> usize {
        self.classifier.input_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.classifier.output_dim()
    }

    /// `RM(g(x))`.
    pub fn represent(&self, x: &[f64]) -> Result<Vec<f64>> {
        let raw = self.extractor.forward(x)?;
        self.rm.apply(&raw, self.unified_dim())
    }

    /// Mapped representations of all training samples with their classes.
    pub fn representation_set(&self) -> Result<RepresentationSet> {
        let reps = self
            .train
            .samples()
            .iter()
            .map(|s| self.represent(&s.x))
            .collect::<Result<Vec<_>>>()?;
        let classes = self.train.samples().iter().map(|s| s.label).collect();
        RepresentationSet::from_classes(reps, classes, self.num_classes())
    }

    /// Per-category prototypes of the mapped training representations.
    pub fn prototypes(&self) -> Result<Vec<(usize, Vec<f64>)>> {
        let set = self.representation_set()?;
        Ok(prototypes_of_mapped(set.reps(), set.classes()))
    }

    pub fn predict_with(&self, head: &DenseNet, x: &[f64]) -> Result<usize> {
        Ok(argmax(&head.forward(&self.represent(x)?)?))
    }

    /// Test accuracy with `head` on top of this client's extractor; `None`
    /// when the client has no test data.
    pub fn accuracy_with(&self, head: &DenseNet) -> Result<Option<f64>> {
        if self.test.is_empty() {
            return Ok(None);
        }
        let mut hits = 0usize;
        for s in self.test.samples() {
            if self.predict_with(head, &s.x)? == s.label {
                hits += 1;
            }
        }
        Ok(Some(hits as f64 / self.test.len() as f64))
    }

    fn proto_target(&self, class: usize) -> Option<&[f64]> {
        if self.proto_lambda == 0.0 {
            return None;
        }
        self.global_prototypes
            .iter()
            .find(|(c, _)| *c == class)
            .map(|(_, p)| p.as_slice())
    }

    fn sample_loss(&self, x: &[f64], label: usize) -> Result<f64> {
        let rep = self.represent(x)?;
        let logits = self.classifier.forward(&rep)?;
        let target = LabelEncoding::one_hot(label, self.num_classes())?;
        let mut loss = soft_cross_entropy(&logits, &target)?;
        if let Some(p) = self.proto_target(label) {
            loss += self.proto_lambda * mean_sq_dist(&rep, p);
        }
        Ok(loss)
    }

    /// Mean local objective over the training set.
    pub fn training_loss(&self) -> Result<f64> {
        if self.train.is_empty() {
            return Err(Error::Empty(format!(
                "client {} has no training data",
                self.id
            )));
        }
        let mut total = 0.0;
        for s in self.train.samples() {
            total += self.sample_loss(&s.x, s.label)?;
        }
        Ok(total / self.train.len() as f64)
    }

    fn sample_grads(&self, x: &[f64], label: usize) -> Result<(f64, ModelGrads)> {
        let d = self.unified_dim();
        let ext_cache = self.extractor.forward_cached(x)?;
        let trace = self.rm.apply_traced(ext_cache.output(), d)?;
        let head_cache = self.classifier.forward_cached(&trace.output)?;
        let target = LabelEncoding::one_hot(label, self.num_classes())?;
        let mut loss = soft_cross_entropy(head_cache.output(), &target)?;
        let g_logits = soft_cross_entropy_grad(head_cache.output(), &target)?;
        let (g_head, mut g_rep) = self.classifier.backward_from(&head_cache, &g_logits)?;
        if let Some(p) = self.proto_target(label) {
            loss += self.proto_lambda * mean_sq_dist(&trace.output, p);
            let scale = 2.0 * self.proto_lambda / d as f64;
            for ((g, r), pv) in g_rep.iter_mut().zip(&trace.output).zip(p) {
                *g += scale * (r - pv);
            }
        }
        let (g_fc, g_raw) = self.rm.backward(&trace, &g_rep)?;
        let (g_ext, _) = self.extractor.backward_from(&ext_cache, &g_raw)?;
        Ok((
            loss,
            ModelGrads {
                extractor: g_ext,
                fc: g_fc,
                classifier: g_head,
            },
        ))
    }

    fn apply(&mut self, grads: &ModelGrads, lr: f64) -> Result<()> {
        self.extractor.sgd_step(&grads.extractor, lr)?;
        self.classifier.sgd_step(&grads.classifier, lr)?;
        if let (RepresentationMap::FullyConnected(net), Some(g)) = (&mut self.rm, &grads.fc) {
            net.sgd_step(g, lr)?;
        }
        Ok(())
    }
}

fn mean_sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Result of one client's local fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalReport {
    /// Mean minibatch loss over the last epoch (NaN when no epochs ran).
    pub last_epoch_loss: f64,
    pub steps: usize,
}

/// Installs `global_classifier` (if any) as the local head, then runs the
/// configured epochs of minibatch SGD on the local objective. Gradients are
/// averaged per minibatch.
pub fn client_local_update(
    c: &mut ClientState,
    global_classifier: Option<&DenseNet>,
) -> Result<LocalReport> {
    if let Some(g) = global_classifier {
        c.classifier.assign_from(g)?;
    }
    let n = c.train.len();
    if n == 0 {
        return Err(Error::Empty(format!(
            "client {} has no training data",
            c.id
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut steps = 0;
    let mut last_epoch_loss = f64::NAN;
    for epoch in 0..c.hyper.epochs {
        order.shuffle(&mut c.rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(c.hyper.batch_size) {
            let mut acc: Option<ModelGrads> = None;
            for &i in batch {
                let s = &c.train.samples()[i];
                let (loss, g) = c.sample_grads(&s.x, s.label)?;
                if !loss.is_finite() {
                    return Err(Error::Diverged(format!(
                        "client {} epoch {epoch}: non-finite loss",
                        c.id
                    )));
                }
                epoch_loss += loss;
                match &mut acc {
                    Some(a) => a.add_assign(&g)?,
                    None => acc = Some(g),
                }
            }
            let mut g = acc.expect("chunks are never empty");
            g.scale(1.0 / batch.len() as f64);
            let lr = c.hyper.lr;
            c.apply(&g, lr).map_err(|e| match e {
                Error::Diverged(m) => Error::Diverged(format!("client {}: {m}", c.id)),
                other => other,
            })?;
            steps += 1;
        }
        last_epoch_loss = epoch_loss / n as f64;
    }
    Ok(LocalReport {
        last_epoch_loss,
        steps,
    })
}

/// Builds one entangled packet from all local training samples with freshly
/// drawn weights.
pub fn client_make_packet(
    c: &mut ClientState,
    mech: ReMechanism,
    d: usize,
) -> Result<EntangledPacket> {
    if d != c.unified_dim() {
        return Err(Error::shape(format!(
            "client {} maps to {} dims, round expects {d}",
            c.id,
            c.unified_dim()
        )));
    }
    let set = c.representation_set()?;
    if set.is_empty() {
        return Err(Error::Empty(format!(
            "client {} has no training data",
            c.id
        )));
    }
    let w = re_weights(&set, mech, &mut c.rng)?;
    Ok(entangle_mapped(set.reps(), set.classes(), set.num_classes(), &w)?.0)
}

#[derive(Debug, Clone)]
pub struct ServerState {
    pub classifier: DenseNet,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub rng: SimRng,
}

/// Mean soft cross-entropy of `head` over packets.
pub fn packet_loss(head: &DenseNet, packets: &[EntangledPacket]) -> Result<f64> {
    if packets.is_empty() {
        return Err(Error::Empty("no packets".into()));
    }
    let mut total = 0.0;
    for p in packets {
        total += soft_cross_entropy(&head.forward(&p.r_tilde)?, &p.y_tilde)?;
    }
    Ok(total / packets.len() as f64)
}

/// Runs `epochs` shuffled passes of minibatch SGD on
/// `sum_k CE(f(w; r~_k), y~_k)`.
pub fn server_update(s: &mut ServerState, packets: &[EntangledPacket]) -> Result<()> {
    if packets.is_empty() {
        return Err(Error::Empty("server received no packets".into()));
    }
    let d = s.classifier.input_dim();
    let c = s.classifier.output_dim();
    if let Some(p) = packets
        .iter()
        .find(|p| p.dim() != d || p.y_tilde.num_classes() != c)
    {
        return Err(Error::shape(format!(
            "packet is {}-dim with {} categories, classifier is {d}->{c}",
            p.dim(),
            p.y_tilde.num_classes()
        )));
    }
    if s.batch_size == 0 {
        return Err(Error::invalid("server batch size must be positive"));
    }
    let mut order: Vec<usize> = (0..packets.len()).collect();
    for _ in 0..s.epochs {
        order.shuffle(&mut s.rng);
        for batch in order.chunks(s.batch_size) {
            let mut acc = GradientSet::zeros_like(&s.classifier);
            for &i in batch {
                let p = &packets[i];
                let cache = s.classifier.forward_cached(&p.r_tilde)?;
                acc.add_assign(&crate::nn::backward(&s.classifier, &cache, &p.y_tilde)?)?;
            }
            acc.scale(1.0 / batch.len() as f64);
            s.classifier.sgd_step(&acc, s.lr)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommConvention {
    /// Count only representation scalars on upload.
    #[default]
    RepresentationOnly,
    /// Also count the label encoding sent with each representation.
    RepresentationPlusLabel,
}

/// Scalars moved in one round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundComm {
    pub upload: u64,
    pub broadcast: u64,
}

/// FedRE closed form: upload `K*d` (plus `K*C` with labels), broadcast
/// `K*(d*C + C)`, the weights and bias of a `d -> C` linear head.
pub fn count_round(k: u64, d: u64, c: u64, convention: CommConvention) -> RoundComm {
    let per_client_upload = match convention {
        CommConvention::RepresentationOnly => d,
        CommConvention::RepresentationPlusLabel => d + c,
    };
    RoundComm {
        upload: k * per_client_upload,
        broadcast: k * (d * c + c),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CommLedger {
    pub convention: CommConvention,
    pub rounds: Vec<RoundComm>,
}

impl CommLedger {
    pub fn new(convention: CommConvention) -> Self {
        Self {
            convention,
            rounds: Vec::new(),
        }
    }

    pub fn record(&mut self, r: RoundComm) {
        self.rounds.push(r);
    }

    pub fn total(&self) -> RoundComm {
        self.rounds
            .iter()
            .fold(RoundComm::default(), |acc, r| RoundComm {
                upload: acc.upload + r.upload,
                broadcast: acc.broadcast + r.broadcast,
            })
    }
}

/// Uniform sample without replacement of `ceil(rate * K)` client indices,
/// returned ascending.
pub fn participation_sample<R: Rng + ?Sized>(
    num_clients: usize,
    rate: f64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::invalid(format!(
            "participation rate {rate} outside (0, 1]"
        )));
    }
    // Shave float noise so 0.1 * 100 is 10, not 11.
    let m = ((rate * num_clients as f64) - 1e-9).ceil().max(0.0) as usize;
    let m = m.min(num_clients);
    if m == num_clients {
        return Ok((0..num_clients).collect());
    }
    let mut picked = rand::seq::index::sample(rng, num_clients, m).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Which head a client uses when scored.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalHead {
    /// The global classifier the client receives after the round.
    #[default]
    Global,
    /// The client's own head as left by local fine-tuning.
    Local,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub mean_acc: f64,
    pub per_client_acc: Vec<Option<f64>>,
    pub upload_scalars: u64,
    pub broadcast_scalars: u64,
    pub participants: Vec<usize>,
    /// Number of uploaded items (packets or prototypes).
    pub uploads: usize,
}

/// Everything one simulated federation needs between rounds.
#[derive(Debug, Clone)]
pub struct Federation {
    pub clients: Vec<ClientState>,
    pub server: ServerState,
    pub strategy: Strategy,
    pub participation_rate: f64,
    pub participation_rng: SimRng,
    pub ledger: CommLedger,
    pub eval_head: EvalHead,
    pub execution: Execution,
    /// Averaged prototypes held by the server for the prototype strategy.
    pub global_prototypes: Vec<(usize, Vec<f64>)>,
    pub round: usize,
}

impl Federation {
    pub fn new(
        clients: Vec<ClientState>,
        server: ServerState,
        strategy: Strategy,
        convention: CommConvention,
        master_seed: u64,
    ) -> Result<Self> {
        if clients.is_empty() {
            return Err(Error::Empty("federation has no clients".into()));
        }
        let head = server.classifier.shape();
        if let Some(c) = clients.iter().find(|c| c.classifier.shape() != head) {
            return Err(Error::shape(format!(
                "client {} classifier differs from the server's",
                c.id
            )));
        }
        let mut clients = clients;
        if let Strategy::FedProtoStyle { lambda } = strategy {
            for c in &mut clients {
                c.proto_lambda = lambda;
            }
        }
        Ok(Self {
            clients,
            server,
            strategy,
            participation_rate: 1.0,
            participation_rng: stream(master_seed, Domain::Participation, 0),
            ledger: CommLedger::new(convention),
            eval_head: EvalHead::default(),
            execution: Execution::default(),
            global_prototypes: Vec::new(),
            round: 0,
        })
    }

    pub fn unified_dim(&self) -> usize {
        self.server.classifier.input_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.server.classifier.output_dim()
    }

    fn scoring_head<'a>(&'a self, c: &'a ClientState) -> &'a DenseNet {
        if self.strategy.uses_global_classifier() && self.eval_head == EvalHead::Global {
            &self.server.classifier
        } else {
            &c.classifier
        }
    }

    /// Per-client test accuracy and their unweighted mean over clients with
    /// test data.
    pub fn evaluate(&self) -> Result<(f64, Vec<Option<f64>>)> {
        let per = exec::map(self.execution, &self.clients, |c| {
            c.accuracy_with(self.scoring_head(c))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let scored: Vec<f64> = per.iter().flatten().copied().collect();
        let mean = if scored.is_empty() {
            f64::NAN
        } else {
            scored.iter().sum::<f64>() / scored.len() as f64
        };
        Ok((mean, per))
    }
}

/// Executes one communication round. On error nothing is committed.
pub fn run_round(fed: &mut Federation) -> Result<RoundMetrics> {
    let mut part_rng = fed.participation_rng.clone();
    let eligible: Vec<usize> = (0..fed.clients.len())
        .filter(|&i| !fed.clients[i].train.is_empty())
        .collect();
    let picked = participation_sample(eligible.len(), fed.participation_rate, &mut part_rng)?;
    let participants: Vec<usize> = picked.into_iter().map(|i| eligible[i]).collect();
    if participants.is_empty() {
        return Err(Error::Empty("no clients participate in this round".into()));
    }

    let strategy = fed.strategy;
    let d = fed.unified_dim();
    let global = strategy
        .uses_global_classifier()
        .then(|| fed.server.classifier.clone());
    let protos = fed.global_prototypes.clone();

    let mut working: Vec<ClientState> = participants
        .iter()
        .map(|&i| fed.clients[i].clone())
        .collect();
    let outcomes = exec::map_mut(
        fed.execution,
        &mut working,
        |c| -> Result<Vec<EntangledPacket>> {
            if matches!(strategy, Strategy::FedProtoStyle { .. }) {
                c.global_prototypes.clone_from(&protos);
            }
            client_local_update(c, global.as_ref())?;
            baselines::packets_for(&strategy, c, d)
        },
    );
    let mut uploads_per_client = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        uploads_per_client.push(o?);
    }

    let mut server = fed.server.clone();
    let mut new_protos = fed.global_prototypes.clone();
    let all: Vec<EntangledPacket> = uploads_per_client.iter().flatten().cloned().collect();
    match strategy {
        Strategy::Local => {}
        Strategy::FedProtoStyle { .. } => {
            new_protos = baselines::average_prototypes(&all);
        }
        _ => server_update(&mut server, &all)?,
    }

    let stats: Vec<ClientStats> = working
        .iter()
        .map(|c| ClientStats {
            samples: c.train.len(),
            categories: c.train.categories_present().len(),
        })
        .collect();
    let comm = baselines::ledger_for(
        &strategy,
        d as u64,
        fed.num_classes() as u64,
        &stats,
        fed.ledger.convention,
        new_protos.len() as u64,
    );

    for (slot, c) in participants.iter().zip(working) {
        fed.clients[*slot] = c;
    }
    fed.server = server;
    fed.global_prototypes = new_protos;
    fed.participation_rng = part_rng;
    fed.ledger.record(comm);
    let round = fed.round;
    fed.round += 1;

    let (mean_acc, per_client_acc) = fed.evaluate()?;
    Ok(RoundMetrics {
        round,
        mean_acc,
        per_client_acc,
        upload_scalars: comm.upload,
        broadcast_scalars: comm.broadcast,
        participants,
        uploads: all.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;

    #[test]
    fn table_three_counts() {
        let r = count_round(10, 512, 100, CommConvention::RepresentationOnly);
        assert_eq!(
            r,
            RoundComm {
                upload: 5120,
                broadcast: 513_000
            }
        );
        let r = count_round(10, 512, 10, CommConvention::RepresentationOnly);
        assert_eq!(
            r,
            RoundComm {
                upload: 5120,
                broadcast: 51_300
            }
        );
        let r = count_round(1, 1, 1, CommConvention::RepresentationPlusLabel);
        assert_eq!(
            r,
            RoundComm {
                upload: 2,
                broadcast: 2
            }
        );
    }

    #[test]
    fn participation_counts() {
        let mut rng = stream(0, Domain::Participation, 0);
        assert_eq!(
            participation_sample(7, 1.0, &mut rng).unwrap(),
            (0..7).collect::<Vec<_>>()
        );
        assert_eq!(participation_sample(100, 0.1, &mut rng).unwrap().len(), 10);
        assert_eq!(participation_sample(100, 0.2, &mut rng).unwrap().len(), 20);
        assert_eq!(participation_sample(10, 0.25, &mut rng).unwrap().len(), 3);
        assert!(participation_sample(10, 0.0, &mut rng).is_err());
        assert!(participation_sample(10, 1.5, &mut rng).is_err());
    }

    #[test]
    fn participation_replays() {
        let mut a = stream(5, Domain::Participation, 0);
        let mut b = stream(5, Domain::Participation, 0);
        for _ in 0..2 {
            assert_eq!(
                participation_sample(50, 0.2, &mut a).unwrap(),
                participation_sample(50, 0.2, &mut b).unwrap()
            );
        }
    }

    #[test]
    fn server_rejects_wrong_dims() {
        let mut rng = stream(0, Domain::ServerInit, 0);
        let mut s = ServerState {
            classifier: DenseNet::glorot(&[4, 3], Activation::Relu, Activation::Identity, &mut rng)
                .unwrap(),
            lr: 0.1,
            batch_size: 10,
            epochs: 1,
            rng,
        };
        let p = EntangledPacket::new(vec![0.0; 5], LabelEncoding::one_hot(0, 3).unwrap()).unwrap();
        assert!(matches!(server_update(&mut s, &[p]), Err(Error::Shape(_))));
        assert!(matches!(server_update(&mut s, &[]), Err(Error::Empty(_))));
    }

    #[test]
    fn ledger_totals_accumulate() {
        let mut l = CommLedger::new(CommConvention::RepresentationOnly);
        for _ in 0..3 {
            l.record(count_round(2, 8, 4, l.convention));
        }
        assert_eq!(
            l.total(),
            RoundComm {
                upload: 48,
                broadcast: 3 * 2 * 36
            }
        );
    }
}
