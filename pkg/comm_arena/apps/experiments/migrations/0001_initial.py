# Generated by Django 5.2.7 on 2026-10-17 09:12

import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='Experiment',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('mode', models.CharField(choices=[('no_comm', 'No Communication'), ('full_obs', 'Full Observability'), ('private_comm', 'Private Communication'), ('public_comm', 'Public Communication')], help_text='Communication mode of every run', max_length=20)),
                ('runs', models.PositiveIntegerField(default=5, help_text='Number of seeded runs')),
                ('epochs', models.PositiveIntegerField(help_text='Epochs per run')),
                ('seed', models.IntegerField(default=0, help_text='Base seed; run i uses seed + i')),
                ('output_dir', models.CharField(help_text='Results directory', max_length=500)),
                ('status', models.CharField(choices=[('PENDING', 'Pending'), ('RUNNING', 'Running'), ('COMPLETED', 'Completed'), ('FAILED', 'Failed')], default='PENDING', help_text='Current status of the experiment', max_length=20)),
                ('error_message', models.TextField(blank=True, default='')),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('completed_at', models.DateTimeField(blank=True, null=True)),
            ],
            options={
                'db_table': 'experiments',
                'ordering': ['-created_at'],
                'indexes': [models.Index(fields=['mode'], name='experiments_mode_idx'), models.Index(fields=['status'], name='experiments_status_idx')],
            },
        ),
        migrations.CreateModel(
            name='TrainingRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('index', models.PositiveIntegerField()),
                ('seed', models.IntegerField()),
                ('status', models.CharField(choices=[('PENDING', 'Pending'), ('RUNNING', 'Running'), ('COMPLETED', 'Completed'), ('FAILED', 'Failed')], default='PENDING', max_length=20)),
                ('average_reward', models.FloatField(blank=True, null=True)),
                ('peak_reward', models.FloatField(blank=True, null=True)),
                ('error_message', models.TextField(blank=True, default='')),
                ('completed_at', models.DateTimeField(blank=True, null=True)),
                ('experiment', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='training_runs', to='experiments.experiment')),
            ],
            options={
                'db_table': 'training_runs',
                'ordering': ['experiment', 'index'],
                'constraints': [models.UniqueConstraint(fields=('experiment', 'index'), name='unique_run_index')],
            },
        ),
    ]
