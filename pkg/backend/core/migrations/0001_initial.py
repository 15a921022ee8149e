# Generated by Django 5.2.8

import core.models
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('run_id', models.CharField(default=core.models.runid, editable=False, max_length=20, unique=True)),
                ('subcommand', models.CharField(choices=[('simulate', 'Simulate'), ('fit', 'Fit')], max_length=20)),
                ('label', models.CharField(blank=True, default='', max_length=200)),
                ('manifest', models.JSONField(default=dict)),
                ('summary', models.JSONField(blank=True, default=list)),
                ('outputs', models.JSONField(blank=True, default=list)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'ordering': ['-created_at', '-id'],
                'indexes': [
                    models.Index(fields=['subcommand'], name='run_subcommand_idx'),
                    models.Index(fields=['created_at'], name='run_created_at_idx'),
                ],
            },
        ),
    ]
