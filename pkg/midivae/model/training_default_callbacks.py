import logging

logger = logging.getLogger('midivae.training')


def _on_batch_end(epoch, step, losses):
    logger.debug(f"epoch {epoch} step {step}: total={losses.total:.4f} pitch_ce={losses.pitch_ce:.4f}")


def _on_epoch_end(epoch, row):
    logger.info(
        f"epoch {epoch}: train_total={row['train_total']:.4f} test_total={row['test_total']:.4f} "
        f"test_pitch_acc={row['test_pitch_acc']:.4f} test_style_acc={row['test_style_acc']:.4f}"
    )


def _on_stop(epoch, reason):
    logger.info(f"### Training stopped after epoch {epoch}: {reason} ###")
